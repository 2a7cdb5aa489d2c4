//! Maintenance of conjunctive queries whose relations are split into static
//! (never updated) and dynamic (updated) ones.
//!
//! The crate classifies a query into one of three tractability classes,
//! computes its preprocessing width, compiles well-behaved queries into
//! safe view trees that are maintained under single-tuple updates with
//! constant-delay enumeration, and compiles the remaining class into a
//! transition system over the maximal dynamic database.
//!
//! ```
//! use mixivm::{classify, Class, Query};
//!
//! let q = Query::parse("Q(A,B,C) := R@d(A,D), S@d(A,B), T@s(B,C).").unwrap();
//! assert_eq!(classify(&q).class, Class::Lin);
//! ```

pub mod bench;
pub mod classify;
pub mod data;
pub mod engine;
mod error;
pub mod gen;
pub mod join;
pub mod oracle;
pub mod par;
pub mod parser;
pub mod query;
pub mod rewrite;
pub mod runtime;
pub mod set;
pub mod store;
pub mod transition;
pub mod vo;
pub mod width;

pub use classify::{classify, Class, ClassificationReport};
pub use data::{Database, Interner, Tuple, Value};
pub use engine::Engine;
pub use error::{Error, ParseError, Result};
pub use par::Parallelism;
pub use parser::{parse_update_stream, UpdateEvent};
pub use query::{Atom, AtomKind, Query, Var};
pub use rewrite::{rewrite, ViewTree};
pub use runtime::Runtime;
pub use transition::{TransitionMode, TransitionSystem};
pub use vo::VariableOrder;
pub use width::{preprocessing_width, Rational, WidthResult};
