//! System definitions: closed-form time-dependent matrices and nonlinear
//! vector fields, parsed from a small expression language with exact
//! symbolic differentiation.

mod expr;
mod parser;
mod system;

pub use expr::{BinOp, CompiledExpr, EvalError, Expr, UnaryOp, Var};
pub use parser::{parse_expr, ParseError};
pub use system::{SysdefError, SystemDef, SystemKind};
