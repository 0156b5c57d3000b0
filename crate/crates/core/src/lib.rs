pub mod benefit;
pub mod causal;
pub mod ensemble;
pub mod evaluation;
pub mod flow;
pub mod gateway;
pub mod manifest;
pub mod model;
pub mod seeding;
pub mod synthetic;
pub mod text;
pub mod pipeline;
