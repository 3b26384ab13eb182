//! H-representation of the rule polytope, an LP oracle over it, and the
//! interior-point ray map behind the constraints head.

mod interior;
mod lp;
mod system;

pub use interior::{interior_point, map_to_polytope, InteriorPoint, PolytopeMap, BOUNDARY_MARGIN};
pub use lp::{lp_max, rational_from_f64, LpScalar, LpSolution};
pub use system::{clauses_to_inequalities, InequalitySystem, Row};
