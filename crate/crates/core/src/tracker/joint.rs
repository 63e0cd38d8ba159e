//! Joint rider/motorcycle assignment as a 0-1 program, solved exactly.
//!
//! Variables: one bit per rider hypothesis (`t_r`), one per motorcycle
//! hypothesis (`t_m`) and one link bit per rider × motorcycle hypothesis pair
//! (`e`). A hypothesis is a (track, detection) pairing of the same class.
//!
//! ```text
//! maximize   λr Σ t_r[i] s_r[i] + λm Σ t_m[j] s_m[j] + λa Σ e[i][j] a[i][j]
//! subject to at most one chosen hypothesis per track and per detection (each class)
//!            e[i][j] ≤ t_r[i],  e[i][j] ≤ t_m[j]
//!            Σ_j e[i][j] ≤ 1                       (a rider rides one motorcycle)
//!            e[i][j] = 0 where the pair is locked out
//! ```
//!
//! Once the motorcycle side is fixed the best links follow per rider, and the
//! rider side reduces to a linear assignment with each rider hypothesis
//! credited its best available link. The solver therefore branches only on
//! motorcycle hypotheses that can earn a positive link, bounding each node by
//! a relaxed motorcycle assignment plus a rider assignment that assumes every
//! still-open motorcycle hypothesis is taken.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::assoc::ObjectClass;
use crate::lap::max_weight_matching;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("{class:?} hypotheses: {size} exceeds solver cap {cap}")]
    SizeCap {
        class: ObjectClass,
        size: usize,
        cap: usize,
    },
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintViolation {
    #[error("{0:?} hypotheses {1} and {2} share a track or detection")]
    DoubleAssignment(ObjectClass, usize, usize),
    #[error("link ({0}, {1}) set without both hypotheses chosen")]
    DanglingLink(usize, usize),
    #[error("rider hypothesis {0} linked to {1} motorcycles")]
    MultipleLinks(usize, usize),
    #[error("link ({0}, {1}) set on a locked pair")]
    LockedLink(usize, usize),
    #[error("solution shape does not match problem")]
    Shape,
}

/// Pairing of a track with a current-frame detection, both indexed within their class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hypothesis {
    pub track: usize,
    pub detection: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub rider: f64,
    pub moto: f64,
    pub assoc: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            rider: 1.0,
            moto: 1.0,
            assoc: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointProblem {
    pub rider_hyps: Vec<Hypothesis>,
    pub moto_hyps: Vec<Hypothesis>,
    pub rider_scores: Vec<f64>,
    pub moto_scores: Vec<f64>,
    /// Rider-major `|rider_hyps| × |moto_hyps|`; `None` marks a locked pair.
    pub assoc: Vec<Option<f64>>,
    pub weights: ObjectiveWeights,
}

impl JointProblem {
    pub fn new(
        rider_hyps: Vec<Hypothesis>,
        rider_scores: Vec<f64>,
        moto_hyps: Vec<Hypothesis>,
        moto_scores: Vec<f64>,
        assoc: Vec<Option<f64>>,
        weights: ObjectiveWeights,
    ) -> Result<Self, SolveError> {
        let p = Self {
            rider_hyps,
            moto_hyps,
            rider_scores,
            moto_scores,
            assoc,
            weights,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::Malformed(m.to_string()));
        if self.rider_hyps.len() != self.rider_scores.len()
            || self.moto_hyps.len() != self.moto_scores.len()
        {
            return bad("score vector length differs from hypothesis count");
        }
        if self.assoc.len() != self.rider_hyps.len() * self.moto_hyps.len() {
            return bad("association table has wrong shape");
        }
        let finite = |v: &f64| v.is_finite();
        if !self.rider_scores.iter().all(finite)
            || !self.moto_scores.iter().all(finite)
            || !self.assoc.iter().flatten().all(finite)
        {
            return bad("non-finite score");
        }
        for hyps in [&self.rider_hyps, &self.moto_hyps] {
            let mut sorted = hyps.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return bad("duplicate (track, detection) hypothesis");
            }
        }
        Ok(())
    }

    pub fn n_riders(&self) -> usize {
        self.rider_hyps.len()
    }

    pub fn n_motos(&self) -> usize {
        self.moto_hyps.len()
    }

    pub fn assoc(&self, i: usize, j: usize) -> Option<f64> {
        self.assoc[i * self.moto_hyps.len() + j]
    }

    /// Objective of an arbitrary assignment of the three variable families.
    pub fn objective(&self, t_r: &[bool], t_m: &[bool], e: &[bool]) -> f64 {
        let w = &self.weights;
        let mut total = 0.0;
        for (i, &on) in t_r.iter().enumerate() {
            if on {
                total += w.rider * self.rider_scores[i];
            }
        }
        for (j, &on) in t_m.iter().enumerate() {
            if on {
                total += w.moto * self.moto_scores[j];
            }
        }
        for (idx, &on) in e.iter().enumerate() {
            if on {
                if let Some(a) = self.assoc[idx] {
                    total += w.assoc * a;
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    pub rider_chosen: Vec<bool>,
    pub moto_chosen: Vec<bool>,
    /// Rider-major link bits.
    pub links: Vec<bool>,
    pub objective: f64,
}

impl JointSolution {
    fn n_motos(&self) -> usize {
        self.moto_chosen.len()
    }

    pub fn link(&self, i: usize, j: usize) -> bool {
        self.links[i * self.n_motos() + j]
    }

    /// Motorcycle hypothesis linked to rider hypothesis `i`, if any.
    pub fn linked_moto(&self, i: usize) -> Option<usize> {
        (0..self.n_motos()).find(|&j| self.link(i, j))
    }

    /// Checks every constraint family of the program.
    pub fn check(&self, p: &JointProblem) -> Result<(), ConstraintViolation> {
        if self.rider_chosen.len() != p.n_riders()
            || self.moto_chosen.len() != p.n_motos()
            || self.links.len() != p.n_riders() * p.n_motos()
        {
            return Err(ConstraintViolation::Shape);
        }
        for (class, hyps, chosen) in [
            (ObjectClass::Rider, &p.rider_hyps, &self.rider_chosen),
            (ObjectClass::Motorcycle, &p.moto_hyps, &self.moto_chosen),
        ] {
            let picked: Vec<usize> = (0..hyps.len()).filter(|&k| chosen[k]).collect();
            for (x, &a) in picked.iter().enumerate() {
                for &b in &picked[x + 1..] {
                    if hyps[a].track == hyps[b].track || hyps[a].detection == hyps[b].detection {
                        return Err(ConstraintViolation::DoubleAssignment(class, a, b));
                    }
                }
            }
        }
        for i in 0..p.n_riders() {
            let mut count = 0;
            for j in 0..p.n_motos() {
                if !self.link(i, j) {
                    continue;
                }
                count += 1;
                if !(self.rider_chosen[i] && self.moto_chosen[j]) {
                    return Err(ConstraintViolation::DanglingLink(i, j));
                }
                if p.assoc(i, j).is_none() {
                    return Err(ConstraintViolation::LockedLink(i, j));
                }
            }
            if count > 1 {
                return Err(ConstraintViolation::MultipleLinks(i, count));
            }
        }
        Ok(())
    }
}

/// One class's hypotheses laid out on a track × detection grid.
struct Side<'a> {
    hyps: &'a [Hypothesis],
    n_tracks: usize,
    n_dets: usize,
    lookup: Vec<Option<usize>>,
}

impl<'a> Side<'a> {
    fn new(hyps: &'a [Hypothesis]) -> Self {
        let n_tracks = hyps.iter().map(|h| h.track + 1).max().unwrap_or(0);
        let n_dets = hyps.iter().map(|h| h.detection + 1).max().unwrap_or(0);
        let mut lookup = vec![None; n_tracks * n_dets];
        for (k, h) in hyps.iter().enumerate() {
            lookup[h.track * n_dets + h.detection] = Some(k);
        }
        Self {
            hyps,
            n_tracks,
            n_dets,
            lookup,
        }
    }

    fn conflicts(&self, a: usize, b: usize) -> bool {
        a != b
            && (self.hyps[a].track == self.hyps[b].track
                || self.hyps[a].detection == self.hyps[b].detection)
    }

    /// Best matching over hypotheses with `allowed(k)`; returns value and chosen hypotheses.
    fn assign(&self, weight: impl Fn(usize) -> f64, allowed: impl Fn(usize) -> bool) -> (f64, Vec<usize>) {
        let pairs = max_weight_matching(self.n_tracks, self.n_dets, |t, d| {
            self.lookup[t * self.n_dets + d]
                .filter(|&k| allowed(k))
                .map(&weight)
        });
        let chosen: Vec<usize> = pairs
            .into_iter()
            .filter_map(|(t, d)| self.lookup[t * self.n_dets + d])
            .collect();
        let value = chosen.iter().map(|&k| weight(k)).sum();
        (value, chosen)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Decision {
    Open,
    In,
    Out,
}

struct Node {
    decisions: Vec<Decision>,
    /// Next position in the coupled-hypothesis order to branch on.
    cursor: usize,
    bound: f64,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap on bound; earlier nodes first among equal bounds
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Solver<'a> {
    p: &'a JointProblem,
    riders: Side<'a>,
    motos: Side<'a>,
    /// Motorcycle hypotheses that can earn a positive link, in index order.
    coupled: Vec<usize>,
    is_coupled: Vec<bool>,
    /// Weighted positive link value, rider-major; 0 where no link is worth making.
    link_value: Vec<f64>,
    explored: u64,
}

/// Value and motorcycle set of a fully decided node.
struct Evaluation {
    value: f64,
    moto_in: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn new(p: &'a JointProblem) -> Self {
        let n_m = p.n_motos();
        let mut link_value = vec![0.0; p.n_riders() * n_m];
        let mut is_coupled = vec![false; n_m];
        for i in 0..p.n_riders() {
            for j in 0..n_m {
                if let Some(a) = p.assoc(i, j) {
                    let v = p.weights.assoc * a;
                    if v > 0.0 {
                        link_value[i * n_m + j] = v;
                        is_coupled[j] = true;
                    }
                }
            }
        }
        let coupled = (0..n_m).filter(|&j| is_coupled[j]).collect();
        Self {
            p,
            riders: Side::new(&p.rider_hyps),
            motos: Side::new(&p.moto_hyps),
            coupled,
            is_coupled,
            link_value,
            explored: 0,
        }
    }

    fn rider_weight(&self, i: usize, moto_set: &[bool]) -> f64 {
        let n_m = self.p.n_motos();
        let bonus = (0..n_m)
            .filter(|&j| moto_set[j])
            .map(|j| self.link_value[i * n_m + j])
            .fold(0.0, f64::max);
        self.p.weights.rider * self.p.rider_scores[i] + bonus
    }

    fn moto_weight(&self, j: usize) -> f64 {
        self.p.weights.moto * self.p.moto_scores[j]
    }

    fn moto_blocked(&self, decisions: &[Decision], j: usize) -> bool {
        (0..decisions.len()).any(|x| decisions[x] == Decision::In && self.motos.conflicts(x, j))
    }

    /// Upper bound: open coupled hypotheses count as available to both sides.
    fn bound(&self, decisions: &[Decision]) -> f64 {
        let fixed: f64 = (0..decisions.len())
            .filter(|&j| decisions[j] == Decision::In)
            .map(|j| self.moto_weight(j))
            .sum();
        let available = |j: usize| {
            decisions[j] == Decision::Open && !self.moto_blocked(decisions, j)
        };
        let (moto_val, _) = self.motos.assign(|j| self.moto_weight(j), available);
        let optimistic: Vec<bool> = (0..decisions.len())
            .map(|j| {
                self.is_coupled[j]
                    && (decisions[j] == Decision::In || available(j))
            })
            .collect();
        let (rider_val, _) = self
            .riders
            .assign(|i| self.rider_weight(i, &optimistic), |_| true);
        fixed + moto_val + rider_val
    }

    /// Exact value when every open coupled hypothesis is dropped.
    fn evaluate(&self, decisions: &[Decision]) -> Evaluation {
        let moto_in: Vec<usize> = (0..decisions.len())
            .filter(|&j| decisions[j] == Decision::In)
            .collect();
        let fixed: f64 = moto_in.iter().map(|&j| self.moto_weight(j)).sum();
        let (free_val, _) = self.motos.assign(
            |j| self.moto_weight(j),
            |j| !self.is_coupled[j] && decisions[j] != Decision::In && !self.moto_blocked(decisions, j),
        );
        let in_set: Vec<bool> = decisions.iter().map(|d| *d == Decision::In).collect();
        let (rider_val, _) = self.riders.assign(|i| self.rider_weight(i, &in_set), |_| true);
        Evaluation {
            value: fixed + free_val + rider_val,
            moto_in,
        }
    }

    fn child(&self, parent: &Node, j: usize, include: bool, seq: u64) -> Node {
        let mut decisions = parent.decisions.clone();
        if include {
            decisions[j] = Decision::In;
            for x in 0..decisions.len() {
                if decisions[x] == Decision::Open && self.motos.conflicts(j, x) {
                    decisions[x] = Decision::Out;
                }
            }
        } else {
            decisions[j] = Decision::Out;
        }
        let bound = self.bound(&decisions);
        Node {
            decisions,
            cursor: parent.cursor + 1,
            bound,
            seq,
        }
    }

    fn run(&mut self) -> Vec<usize> {
        let n_m = self.p.n_motos();
        let root_decisions = vec![Decision::Open; n_m];
        let root = Node {
            bound: self.bound(&root_decisions),
            decisions: root_decisions,
            cursor: 0,
            seq: 0,
        };
        let mut best = self.evaluate(&root.decisions);
        let mut seq = 1u64;
        let mut heap = BinaryHeap::new();
        heap.push(root);
        while let Some(mut node) = heap.pop() {
            let tol = 1e-12 * (1.0 + best.value.abs());
            if node.bound <= best.value + tol {
                break;
            }
            self.explored += 1;
            while node.cursor < self.coupled.len()
                && node.decisions[self.coupled[node.cursor]] != Decision::Open
            {
                node.cursor += 1;
            }
            if node.cursor == self.coupled.len() {
                let leaf = self.evaluate(&node.decisions);
                if leaf.value > best.value + tol {
                    best = leaf;
                }
                continue;
            }
            let j = self.coupled[node.cursor];
            // a hypothesis nothing else competes for is never worth dropping
            let contested = (0..n_m).any(|x| {
                node.decisions[x] != Decision::Out && self.motos.conflicts(j, x)
            });
            let mut children = vec![self.child(&node, j, true, seq)];
            seq += 1;
            if contested || self.moto_weight(j) < 0.0 {
                children.push(self.child(&node, j, false, seq));
                seq += 1;
            }
            for c in children {
                let eval = self.evaluate(&c.decisions);
                if eval.value > best.value + 1e-12 * (1.0 + best.value.abs()) {
                    best = eval;
                }
                if c.bound > best.value + 1e-12 * (1.0 + best.value.abs()) {
                    heap.push(c);
                }
            }
        }
        best.moto_in
    }
}

/// Solves the joint program to global optimality.
///
/// Problems with more than `cap` hypotheses in either class are rejected; an
/// empty problem yields an empty solution with objective 0.
pub fn solve_joint(p: &JointProblem, cap: usize) -> Result<JointSolution, SolveError> {
    p.validate()?;
    for (class, size) in [
        (ObjectClass::Rider, p.n_riders()),
        (ObjectClass::Motorcycle, p.n_motos()),
    ] {
        if size > cap {
            return Err(SolveError::SizeCap { class, size, cap });
        }
    }
    let mut solver = Solver::new(p);
    let moto_in = if solver.coupled.is_empty() {
        Vec::new()
    } else {
        solver.run()
    };
    Ok(assemble(&solver, &moto_in))
}

fn assemble(s: &Solver<'_>, moto_in: &[usize]) -> JointSolution {
    let p = s.p;
    let (n_r, n_m) = (p.n_riders(), p.n_motos());
    let mut in_set = vec![false; n_m];
    for &j in moto_in {
        in_set[j] = true;
    }
    let (_, free) = s.motos.assign(
        |j| s.moto_weight(j),
        |j| !s.is_coupled[j] && !in_set[j] && !moto_in.iter().any(|&x| s.motos.conflicts(x, j)),
    );
    let mut moto_chosen = in_set.clone();
    for j in free {
        moto_chosen[j] = true;
    }
    let (_, riders) = s.riders.assign(|i| s.rider_weight(i, &in_set), |_| true);
    let mut rider_chosen = vec![false; n_r];
    let mut links = vec![false; n_r * n_m];
    for i in riders {
        rider_chosen[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for &j in moto_in {
            let v = s.link_value[i * n_m + j];
            if v > 0.0 && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            links[i * n_m + j] = true;
        }
    }
    let objective = p.objective(&rider_chosen, &moto_chosen, &links);
    let sol = JointSolution {
        rider_chosen,
        moto_chosen,
        links,
        objective,
    };
    debug_assert_eq!(sol.check(p), Ok(()));
    sol
}

/// Independent per-class assignment, the association term ignored.
pub fn solve_independent(p: &JointProblem) -> JointSolution {
    let riders = Side::new(&p.rider_hyps);
    let motos = Side::new(&p.moto_hyps);
    let (_, r) = riders.assign(|i| p.weights.rider * p.rider_scores[i], |_| true);
    let (_, m) = motos.assign(|j| p.weights.moto * p.moto_scores[j], |_| true);
    let mut rider_chosen = vec![false; p.n_riders()];
    let mut moto_chosen = vec![false; p.n_motos()];
    r.into_iter().for_each(|i| rider_chosen[i] = true);
    m.into_iter().for_each(|j| moto_chosen[j] = true);
    let links = vec![false; p.n_riders() * p.n_motos()];
    let objective = p.objective(&rider_chosen, &moto_chosen, &links);
    JointSolution {
        rider_chosen,
        moto_chosen,
        links,
        objective,
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Exhaustive reference for small programs.
    use super::*;

    fn matchings(hyps: &[Hypothesis]) -> Vec<Vec<bool>> {
        fn rec(hyps: &[Hypothesis], k: usize, cur: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
            if k == hyps.len() {
                out.push(cur.clone());
                return;
            }
            rec(hyps, k + 1, cur, out);
            let free = (0..k).all(|x| {
                !cur[x] || (hyps[x].track != hyps[k].track && hyps[x].detection != hyps[k].detection)
            });
            if free {
                cur[k] = true;
                rec(hyps, k + 1, cur, out);
                cur[k] = false;
            }
        }
        let mut out = Vec::new();
        rec(hyps, 0, &mut vec![false; hyps.len()], &mut out);
        out
    }

    /// Maximum objective over every feasible `(t_r, t_m, e)`.
    pub fn brute_force(p: &JointProblem) -> f64 {
        let (n_r, n_m) = (p.n_riders(), p.n_motos());
        let mr = matchings(&p.rider_hyps);
        let mm = matchings(&p.moto_hyps);
        let mut best = f64::NEG_INFINITY;
        for tr in &mr {
            for tm in &mm {
                // enumerate each rider's link choice: none or one chosen, unlocked moto
                let options: Vec<Vec<Option<usize>>> = (0..n_r)
                    .map(|i| {
                        let mut o = vec![None];
                        if tr[i] {
                            o.extend((0..n_m).filter(|&j| tm[j] && p.assoc(i, j).is_some()).map(Some));
                        }
                        o
                    })
                    .collect();
                let mut idx = vec![0usize; n_r];
                loop {
                    let mut e = vec![false; n_r * n_m];
                    for i in 0..n_r {
                        if let Some(j) = options[i][idx[i]] {
                            e[i * n_m + j] = true;
                        }
                    }
                    best = best.max(p.objective(tr, tm, &e));
                    let mut k = 0;
                    while k < n_r {
                        idx[k] += 1;
                        if idx[k] < options[k].len() {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                    if k == n_r {
                        break;
                    }
                }
            }
        }
        best
    }

    fn random_hyps(rng: &mut impl rand::Rng) -> Vec<Hypothesis> {
        let nt = rng.gen_range(0..=4);
        let nd = rng.gen_range(0..=4);
        let mut h = Vec::new();
        for t in 0..nt {
            for d in 0..nd {
                if rng.gen_bool(0.45) {
                    h.push(Hypothesis { track: t, detection: d });
                }
            }
        }
        h
    }

    pub fn random_problem(rng: &mut impl rand::Rng, weights: ObjectiveWeights) -> JointProblem {
        let rh = random_hyps(rng);
        let mh = random_hyps(rng);
        let rs = rh.iter().map(|_| rng.gen_range(-0.2..1.5)).collect();
        let ms = mh.iter().map(|_| rng.gen_range(-0.2..1.5)).collect();
        let assoc = (0..rh.len() * mh.len())
            .map(|_| {
                if rng.gen_bool(0.15) {
                    None
                } else {
                    Some(rng.gen_range(-0.5..3.5))
                }
            })
            .collect();
        JointProblem::new(rh, rs, mh, ms, assoc, weights).unwrap()
    }
}
