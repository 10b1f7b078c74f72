pub mod cli;
pub mod context;
pub mod decide;
pub mod diag;
pub mod gateway;
pub mod int_types;
pub mod lsp;
pub mod patch;
pub mod prompt;
pub mod repair;
pub mod report;
pub mod syntax;
pub mod stubls;
