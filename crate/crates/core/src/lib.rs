pub mod assoc;
pub mod geom;
pub mod io;
pub mod lap;
pub mod motion;
pub mod tracker;
pub mod simulate;
pub mod evaluate;
pub mod violate;
pub mod config;
pub mod pipeline;
pub mod cli;
