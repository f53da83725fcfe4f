pub mod baseline;
pub mod chunk;
pub mod eval;
pub mod finetune;
pub mod grammar;
pub mod induce;
pub mod pretrain;
