pub mod cli;
pub mod generator;
pub mod kvengine;
pub mod oracle;
pub mod schema;
pub mod tablemult;
pub mod tricount;
