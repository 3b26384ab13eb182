//! One-shot compilation of a schema and rule into a ready-to-use head, plus
//! the on-disk artifact format.
//!
//! Artifact directory layout:
//!
//! ```text
//! artifact.json   everything needed to rebuild the head
//! report.json     sizes (t, d, b, s) and the reduction applied
//! vertices.csv    V, one row per flat marginal index (vertex head only)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{HeadKind, HeadSpec};
use crate::logic::{compile_cnf, DEFAULT_CLAUSE_BUDGET};
use crate::polytope::{clauses_to_inequalities, interior_point, InequalitySystem, InteriorPoint, PolytopeMap};
use crate::rules::{format_ast, parse_rules, RuleAst};
use crate::scalar::Scalar;
use crate::schema::ConceptSchema;
use crate::state_space::{
    admissible_mask, placement_matrix, reduce_schema, vertex_matrix, AdmissibleMask,
    PlacementMatrix, ReducedSchemaMap, VertexMatrix, DEFAULT_ENUMERATION_BUDGET,
    DEFAULT_VERTEX_BUDGET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub head: HeadKind,
    pub reduce: bool,
    pub enumeration_budget: u64,
    pub clause_budget: usize,
    pub vertex_budget: u64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            head: HeadKind::AdmissibleState,
            reduce: false,
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
            clause_budget: DEFAULT_CLAUSE_BUDGET,
            vertex_budget: DEFAULT_VERTEX_BUDGET,
        }
    }
}

impl CompileOptions {
    pub fn with_head(head: HeadKind) -> Self {
        Self {
            head,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionArtifact {
    pub schema: ConceptSchema,
    pub map: ReducedSchemaMap,
    /// Rewritten rule over the reduced schema.
    pub rules: String,
}

/// Serialized compilation result. Rules are stored as canonical text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub options: CompileOptions,
    pub schema: ConceptSchema,
    pub rules: String,
    pub reduction: Option<ReductionArtifact>,
    /// `W` over the core schema (reduced schema when reduced).
    pub placement: Option<PlacementMatrix>,
    /// Inequality system over the core schema.
    pub system: Option<InequalitySystem>,
    pub interior: Option<InteriorPoint<f64>>,
    /// Inequality system over the original schema, for membership checks.
    /// `None` when its CNF exceeds the clause budget.
    pub verification: Option<InequalitySystem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileReport {
    pub head: HeadKind,
    /// Joint states of the compiled (possibly reduced) schema.
    pub t: Option<u64>,
    /// Admissible states.
    pub d: Option<usize>,
    /// Clauses of the simplified CNF.
    pub b: Option<usize>,
    /// Marginal width of the compiled schema.
    pub s: usize,
    pub head_input_width: usize,
    pub original_t: Option<u64>,
    pub original_s: usize,
    pub reduction_applied: bool,
    /// Per original concept: reduced outcome set, 0 for the merged outcome;
    /// `null` for concepts left to a separate head.
    pub reduced_outcome_sets: Option<Vec<Option<Vec<usize>>>>,
}

/// A compiled head with the artifacts it was built from.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub artifact: Artifact,
    pub head: HeadSpec<f64>,
}

impl Compiled {
    pub fn head_kind(&self) -> HeadKind {
        self.artifact.options.head
    }

    pub fn schema(&self) -> &ConceptSchema {
        &self.artifact.schema
    }

    /// The same head in another scalar type.
    pub fn head_in<S: Scalar>(&self) -> Result<HeadSpec<S>> {
        build_head(&self.artifact)
    }

    pub fn rule(&self) -> Result<RuleAst> {
        parse_rules(&self.artifact.rules, &self.artifact.schema)
    }

    fn core_schema(&self) -> &ConceptSchema {
        self.artifact
            .reduction
            .as_ref()
            .map_or(&self.artifact.schema, |r| &r.schema)
    }

    pub fn vertices(&self) -> Result<Option<VertexMatrix<f64>>> {
        match &self.artifact.placement {
            Some(p) => {
                let mask = mask_from_placement(p)?;
                Ok(Some(vertex_matrix(&mask, self.core_schema(), self.artifact.options.vertex_budget)?))
            }
            None => Ok(None),
        }
    }

    pub fn report(&self) -> CompileReport {
        let a = &self.artifact;
        let core = self.core_schema();
        CompileReport {
            head: a.options.head,
            t: core.total_states(),
            d: a.placement.as_ref().map(|p| p.admissible_count()),
            b: a.system.as_ref().map(|s| s.clause_count()),
            s: core.marginal_width(),
            head_input_width: self.head.input_width(),
            original_t: a.schema.total_states(),
            original_s: a.schema.marginal_width(),
            reduction_applied: a.reduction.is_some(),
            reduced_outcome_sets: a.reduction.as_ref().map(|r| r.map.outcome_sets(&a.schema)),
        }
    }

    /// Writes `artifact.json`, `report.json` and, for the vertex head,
    /// `vertices.csv` into `dir` (created if missing).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("artifact.json"), serde_json::to_string_pretty(&self.artifact)?)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&self.report())?)?;
        if self.head_kind() == HeadKind::Vertex {
            if let Some(v) = self.vertices()? {
                let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join("vertices.csv"))?;
                for r in 0..v.rows() {
                    w.write_record((0..v.cols()).map(|k| format!("{}", v.get(r, k))))?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join("artifact.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
        let artifact: Artifact = serde_json::from_str(&text)?;
        let head = build_head(&artifact)?;
        Ok(Self { artifact, head })
    }
}

pub fn compile_text(schema: &ConceptSchema, rules: &str, options: CompileOptions) -> Result<Compiled> {
    compile(schema, &parse_rules(rules, schema)?, options)
}

/// Builds every artifact the requested head needs and the head itself.
///
/// The independent head ignores the rule entirely.
pub fn compile(schema: &ConceptSchema, rule: &RuleAst, options: CompileOptions) -> Result<Compiled> {
    let independent = options.head == HeadKind::Independent;
    let rule = if independent { RuleAst::ConstTrue } else { rule.clone() };
    if !independent {
        // surfaces UnsatisfiableRule before any enumeration
        crate::logic::eliminate_negations(&rule, schema)?;
    }

    let reduction = if options.reduce && !independent {
        let r = reduce_schema(&rule, schema)?;
        log::info!(
            "reduced schema: {} -> {} concepts, t {:?} -> {:?}",
            schema.len(),
            r.schema.len(),
            schema.total_states(),
            r.schema.total_states()
        );
        Some(r)
    } else {
        None
    };
    let (core_schema, core_rule) = match &reduction {
        Some(r) => (&r.schema, &r.rule),
        None => (schema, &rule),
    };

    let mut artifact = Artifact {
        options,
        schema: schema.clone(),
        rules: format_ast(&rule, schema),
        reduction: reduction.as_ref().map(|r| ReductionArtifact {
            schema: r.schema.clone(),
            map: r.map.clone(),
            rules: format_ast(&r.rule, &r.schema),
        }),
        placement: None,
        system: None,
        interior: None,
        verification: None,
    };
    if independent {
        let head = build_head(&artifact)?;
        return Ok(Compiled { artifact, head });
    }

    let mask = admissible_mask(core_rule, core_schema, options.enumeration_budget)?;
    log::info!("admissible states: {} of {}", mask.admissible_count(), mask.total());
    let placement = placement_matrix(&mask);

    let core_cnf = match compile_cnf(core_rule, core_schema, options.clause_budget) {
        Ok(cnf) => Some(cnf),
        Err(Error::CnfExplosion { budget }) if options.head != HeadKind::Constraints => {
            log::warn!("CNF exceeds {budget} clauses; no inequality system recorded");
            None
        }
        Err(e) => return Err(e),
    };
    artifact.system = core_cnf.map(|c| clauses_to_inequalities(&c, core_schema));
    artifact.verification = if reduction.is_some() {
        compile_cnf(&rule, schema, options.clause_budget)
            .ok()
            .map(|c| clauses_to_inequalities(&c, schema))
    } else {
        artifact.system.clone()
    };
    if options.head == HeadKind::Constraints {
        let v = vertex_matrix::<f64>(&mask, core_schema, options.vertex_budget)?;
        artifact.interior = Some(interior_point(&v));
    }
    artifact.placement = Some(placement);

    let head = build_head(&artifact)?;
    Ok(Compiled { artifact, head })
}

fn mask_from_placement(p: &PlacementMatrix) -> Result<AdmissibleMask> {
    if !p.is_valid() {
        return Err(Error::Artifact("placement states must be strictly increasing within 1..=t".into()));
    }
    let mut bits = vec![false; p.total as usize];
    for &k in &p.states {
        bits[(k - 1) as usize] = true;
    }
    AdmissibleMask::from_bits(bits)
}

fn missing(what: &str) -> Error {
    Error::Artifact(format!("missing {what}"))
}

/// Rebuilds the head described by an artifact in scalar type `S`.
pub fn build_head<S: Scalar>(a: &Artifact) -> Result<HeadSpec<S>> {
    let kind = a.options.head;
    if kind == HeadKind::Independent {
        return Ok(HeadSpec::independent(&a.schema));
    }
    let core_schema = a.reduction.as_ref().map_or(&a.schema, |r| &r.schema);
    let placement = a.placement.as_ref().ok_or_else(|| missing("placement"))?;
    if placement.total != core_schema.total_states().unwrap_or(0) {
        return Err(Error::Artifact(format!(
            "placement covers {} states, schema has {:?}",
            placement.total,
            core_schema.total_states()
        )));
    }
    let core = match kind {
        HeadKind::Base => HeadSpec::base(core_schema, &mask_from_placement(placement)?),
        HeadKind::AdmissibleState => HeadSpec::admissible_state(core_schema, placement),
        HeadKind::Vertex => {
            let mask = mask_from_placement(placement)?;
            HeadSpec::vertex(core_schema, vertex_matrix(&mask, core_schema, a.options.vertex_budget)?)
        }
        HeadKind::Constraints => {
            let system = a.system.clone().ok_or_else(|| missing("inequality system"))?;
            let interior = a.interior.as_ref().ok_or_else(|| missing("interior point"))?;
            let interior = InteriorPoint {
                point: interior.point.iter().map(|&x| S::of(x)).collect(),
                frozen: interior.frozen.clone(),
            };
            if system.width() != core_schema.marginal_width() || interior.point.len() != system.width() {
                return Err(Error::Artifact("inequality system width does not match the schema".into()));
            }
            HeadSpec::constraints(core_schema, PolytopeMap::new(system, interior))
        }
        HeadKind::Independent => unreachable!(),
    };
    Ok(match &a.reduction {
        Some(r) => HeadSpec::expanded(core, &a.schema, &r.map),
        None => core,
    })
}
