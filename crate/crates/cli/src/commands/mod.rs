pub mod evaluate;
pub mod generate;
pub mod preprocess;
pub mod sweep;
pub mod train;
