//! Static type checking of recovered pseudocode over a small type lattice.

pub mod checker;
pub mod types;

pub use checker::{check_unit, FnSig, Rule, TypeEnv, Violation, ViolationReport};
pub use types::{common_type, convertible, element_type, meet, more_precise, return_type, Family, SolType, TypeClass, TypeError};

use crate::depgraph::BuiltinTable;
use crate::frontend::SourceUnit;

/// Checks a unit against the shipped builtin table.
pub fn check(unit: &SourceUnit, builtins: &BuiltinTable) -> ViolationReport {
    let env = TypeEnv::seed(unit, builtins);
    check_unit(unit, &env)
}
