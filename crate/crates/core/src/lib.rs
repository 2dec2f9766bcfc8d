//! A gradually typed π-calculus with input/output capabilities.
//!
//! Pipeline: [`parser`] reads surface programs, [`typecheck`] accepts them
//! up to type consistency, [`castinsert`] compiles them to the cast
//! calculus and [`runtime`] executes the result, resolving casts as
//! channels are used.

pub mod castinsert;
pub mod parser;
pub mod runtime;
pub mod syntax;
pub mod typecheck;

pub use castinsert::{compile, compile_program, compile_system, insert_casts, reverse_type, CompilationOutput};
pub use parser::{parse, parse_system, ParseError, Program};
pub use runtime::{normalize, run, Configuration, RunReport, Scheduler, Status};
pub use syntax::{CastProcess, Name, SurfaceProcess, Type, TypeEnv};
pub use typecheck::{check, check_program, consistent, TypeDiagnostic};
