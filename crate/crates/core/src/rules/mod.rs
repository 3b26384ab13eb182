//! The textual rule language: AST, parser and formatter.

mod ast;
mod format;
mod parser;

pub use ast::RuleAst;
pub use format::format_ast;
pub use parser::parse_rules;
