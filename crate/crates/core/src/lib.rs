pub mod align;
pub mod asg;
pub mod decoder;
pub mod experiment;
pub mod grammars;
pub mod logic;
pub mod mcts;
pub mod parser;
pub mod policy;
pub mod syntax;
pub mod tasks;
