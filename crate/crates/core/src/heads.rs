//! Concept heads: the final layer mapping network outputs to marginal
//! vectors that satisfy the rules for every input.
//!
//! | kind          | input width | mechanism                                   |
//! |---------------|-------------|---------------------------------------------|
//! | `base`        | `t`         | softmax over all joint states, mask, renormalize |
//! | `as`          | `d`         | softmax over admissible states, place, marginalize |
//! | `vertex`      | `d`         | `V · softmax(z)`                            |
//! | `constraints` | `s + 1`     | gated ray from an interior point            |
//! | `independent` | `s`         | one softmax per concept, no rules (baseline) |
//!
//! When the schema was reduced, the core head works on the reduced schema and
//! extra softmax blocks predict untouched concepts and the split of each
//! merged 0-outcome; the output is always over the original schema.

use serde::{Deserialize, Serialize};

use crate::polytope::PolytopeMap;
use crate::scalar::{sigmoid, softmax, softmax_vjp, Scalar};
use crate::schema::{ConceptSchema, MarginalVector};
use crate::state_space::{
    AdmissibleMask, ConceptReduction, PlacementMatrix, ReducedSchemaMap, VertexMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Base,
    #[serde(rename = "as")]
    AdmissibleState,
    Vertex,
    Constraints,
    Independent,
}

impl HeadKind {
    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::Base => "base",
            HeadKind::AdmissibleState => "as",
            HeadKind::Vertex => "vertex",
            HeadKind::Constraints => "constraints",
            HeadKind::Independent => "independent",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(HeadKind::Base),
            "as" | "admissible" | "admissible_state" => Ok(HeadKind::AdmissibleState),
            "vertex" => Ok(HeadKind::Vertex),
            "constraints" => Ok(HeadKind::Constraints),
            "independent" => Ok(HeadKind::Independent),
            other => Err(format!("unknown head kind `{other}`")),
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Flat marginal indices touched by each joint state of a mixture.
#[derive(Debug, Clone)]
struct StateTable {
    flat: Vec<Vec<usize>>,
    width: usize,
}

impl StateTable {
    fn new(states: &PlacementMatrix, schema: &ConceptSchema) -> Self {
        let flat = states
            .decoded(schema)
            .iter()
            .map(|c| c.iter().enumerate().map(|(i, &v)| schema.flat_index(i, v)).collect())
            .collect();
        Self {
            flat,
            width: schema.marginal_width(),
        }
    }

    fn mix<S: Scalar>(&self, weights: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.width];
        for (idx, &w) in self.flat.iter().zip(weights) {
            for &j in idx {
                out[j] = out[j] + w;
            }
        }
        out
    }

    fn mix_transpose<S: Scalar>(&self, g: &[S]) -> Vec<S> {
        self.flat
            .iter()
            .map(|idx| idx.iter().map(|&j| g[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Core<S> {
    Base {
        /// 0-based joint index of each admissible state.
        admissible: Vec<usize>,
        total: usize,
        table: StateTable,
    },
    Mixture {
        table: StateTable,
    },
    Vertex {
        vertices: VertexMatrix<S>,
    },
    Constraints {
        map: PolytopeMap<S>,
    },
    Independent {
        offsets: Vec<usize>,
    },
}

impl<S: Scalar> Core<S> {
    fn input_width(&self) -> usize {
        match self {
            Core::Base { total, .. } => *total,
            Core::Mixture { table } => table.flat.len(),
            Core::Vertex { vertices } => vertices.cols(),
            Core::Constraints { map } => map.system().width() + 1,
            Core::Independent { offsets } => *offsets.last().unwrap(),
        }
    }

    fn forward(&self, z: &[S]) -> Vec<S> {
        match self {
            Core::Base {
                admissible, table, ..
            } => {
                // softmax restricted to admissible states equals the
                // masked-and-renormalized full softmax, without underflow
                let logits: Vec<S> = admissible.iter().map(|&k| z[k]).collect();
                table.mix(&softmax(&logits))
            }
            Core::Mixture { table } => table.mix(&softmax(z)),
            Core::Vertex { vertices } => vertices.mul(&softmax(z)),
            Core::Constraints { map } => {
                let (dir, gate_raw) = z.split_at(z.len() - 1);
                map.map(dir, sigmoid(gate_raw[0]))
            }
            Core::Independent { offsets } => {
                let mut out = Vec::with_capacity(z.len());
                for w in offsets.windows(2) {
                    out.extend(softmax(&z[w[0]..w[1]]));
                }
                out
            }
        }
    }

    fn vjp(&self, z: &[S], g: &[S]) -> Vec<S> {
        match self {
            Core::Base {
                admissible,
                total,
                table,
            } => {
                let logits: Vec<S> = admissible.iter().map(|&k| z[k]).collect();
                let probs = softmax(&logits);
                let g_logits = softmax_vjp(&probs, &table.mix_transpose(g));
                let mut out = vec![S::zero(); *total];
                for (&k, &gk) in admissible.iter().zip(&g_logits) {
                    out[k] = gk;
                }
                out
            }
            Core::Mixture { table } => softmax_vjp(&softmax(z), &table.mix_transpose(g)),
            Core::Vertex { vertices } => softmax_vjp(&softmax(z), &vertices.mul_transpose(g)),
            Core::Constraints { map } => {
                let (dir, gate_raw) = z.split_at(z.len() - 1);
                let gate = sigmoid(gate_raw[0]);
                let (mut g_dir, g_gate) = map.vjp(dir, gate, g);
                g_dir.push(g_gate * gate * (S::one() - gate));
                g_dir
            }
            Core::Independent { offsets } => {
                let mut out = Vec::with_capacity(z.len());
                for w in offsets.windows(2) {
                    let r = w[0]..w[1];
                    out.extend(softmax_vjp(&softmax(&z[r.clone()]), &g[r]));
                }
                out
            }
        }
    }
}

/// Side softmax block feeding one original concept of a reduced head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Side {
    None,
    Untouched { width: usize },
    Replaced { width: usize },
}

impl Side {
    fn logits(&self) -> usize {
        match self {
            Side::None => 0,
            Side::Untouched { width } => *width,
            Side::Replaced { width } if *width >= 2 => *width,
            Side::Replaced { .. } => 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Expansion {
    reduced: ConceptSchema,
    map: ReducedSchemaMap,
    sides: Vec<Side>,
}

/// A compiled concept head. Forward and VJP are pure functions of the input.
#[derive(Debug, Clone)]
pub struct HeadSpec<S> {
    kind: HeadKind,
    schema: ConceptSchema,
    core: Core<S>,
    expansion: Option<Expansion>,
}

impl<S: Scalar> HeadSpec<S> {
    /// Posterior renormalization over all `t` joint states.
    pub fn base(schema: &ConceptSchema, mask: &AdmissibleMask) -> Self {
        let placement = crate::state_space::placement_matrix(mask);
        let admissible = placement.states.iter().map(|&k| (k - 1) as usize).collect();
        Self::direct(
            HeadKind::Base,
            schema,
            Core::Base {
                admissible,
                total: mask.total(),
                table: StateTable::new(&placement, schema),
            },
        )
    }

    /// Softmax over admissible states, placed by `W` and marginalized.
    pub fn admissible_state(schema: &ConceptSchema, placement: &PlacementMatrix) -> Self {
        Self::direct(
            HeadKind::AdmissibleState,
            schema,
            Core::Mixture {
                table: StateTable::new(placement, schema),
            },
        )
    }

    pub fn vertex(schema: &ConceptSchema, vertices: VertexMatrix<S>) -> Self {
        assert_eq!(vertices.rows(), schema.marginal_width());
        Self::direct(HeadKind::Vertex, schema, Core::Vertex { vertices })
    }

    pub fn constraints(schema: &ConceptSchema, map: PolytopeMap<S>) -> Self {
        assert_eq!(map.system().width(), schema.marginal_width());
        Self::direct(HeadKind::Constraints, schema, Core::Constraints { map })
    }

    /// Plain multi-label head: an independent softmax per concept.
    pub fn independent(schema: &ConceptSchema) -> Self {
        let offsets = (0..schema.len())
            .map(|i| schema.block(i).start)
            .chain(std::iter::once(schema.marginal_width()))
            .collect();
        Self::direct(HeadKind::Independent, schema, Core::Independent { offsets })
    }

    fn direct(kind: HeadKind, schema: &ConceptSchema, core: Core<S>) -> Self {
        Self {
            kind,
            schema: schema.clone(),
            core,
            expansion: None,
        }
    }

    /// Wraps a head built on a reduced schema so that it outputs marginals
    /// over `original`.
    pub fn expanded(reduced_head: HeadSpec<S>, original: &ConceptSchema, map: &ReducedSchemaMap) -> Self {
        assert!(reduced_head.expansion.is_none(), "head already expanded");
        let sides = map
            .concepts
            .iter()
            .enumerate()
            .map(|(i, entry)| match entry {
                ConceptReduction::Untouched => Side::Untouched {
                    width: original.outcome_count(i),
                },
                ConceptReduction::Kept { .. } => Side::None,
                ConceptReduction::Compressed { replaced, .. } => Side::Replaced {
                    width: replaced.len(),
                },
            })
            .collect();
        Self {
            kind: reduced_head.kind,
            schema: original.clone(),
            core: reduced_head.core,
            expansion: Some(Expansion {
                reduced: reduced_head.schema,
                map: map.clone(),
                sides,
            }),
        }
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    /// Schema of the produced marginals.
    pub fn schema(&self) -> &ConceptSchema {
        &self.schema
    }

    pub fn is_reduced(&self) -> bool {
        self.expansion.is_some()
    }

    pub fn input_width(&self) -> usize {
        let side: usize = self
            .expansion
            .as_ref()
            .map_or(0, |e| e.sides.iter().map(Side::logits).sum());
        self.core.input_width() + side
    }

    pub fn output_width(&self) -> usize {
        self.schema.marginal_width()
    }

    pub fn forward(&self, input: &[S]) -> MarginalVector<S> {
        assert_eq!(input.len(), self.input_width(), "head input width");
        let split = self.core.input_width();
        let core_out = self.core.forward(&input[..split]);
        let Some(exp) = &self.expansion else {
            return MarginalVector::from_vec(core_out);
        };
        let side = side_distributions(exp, &input[split..]);
        crate::state_space::expand_compressed_marginals(
            &self.schema,
            &exp.reduced,
            &exp.map,
            &core_out,
            &side,
        )
        .expect("expansion layout is consistent")
    }

    /// Exact vector-Jacobian product of [`HeadSpec::forward`] at `input`.
    pub fn vjp(&self, input: &[S], cotangent: &[S]) -> Vec<S> {
        assert_eq!(input.len(), self.input_width(), "head input width");
        assert_eq!(cotangent.len(), self.output_width(), "cotangent width");
        let split = self.core.input_width();
        let core_in = &input[..split];
        let Some(exp) = &self.expansion else {
            return self.core.vjp(core_in, cotangent);
        };

        let core_out = self.core.forward(core_in);
        let mut g_core = vec![S::zero(); core_out.len()];
        let mut g_side = Vec::with_capacity(input.len() - split);
        let mut cursor = split;
        for (i, (entry, side)) in exp.map.concepts.iter().zip(&exp.sides).enumerate() {
            let block = self.schema.block(i);
            let g = &cotangent[block.clone()];
            match entry {
                ConceptReduction::Untouched => {
                    let w = side.logits();
                    let probs = softmax(&input[cursor..cursor + w]);
                    g_side.extend(softmax_vjp(&probs, g));
                    cursor += w;
                }
                ConceptReduction::Kept { reduced } => {
                    for (dst, &src) in g_core[exp.reduced.block(*reduced)].iter_mut().zip(g) {
                        *dst = src;
                    }
                }
                ConceptReduction::Compressed {
                    reduced,
                    kept,
                    replaced,
                } => {
                    let rb = exp.reduced.block(*reduced);
                    let w = side.logits();
                    let probs = if w == 0 {
                        vec![S::one()]
                    } else {
                        softmax(&input[cursor..cursor + w])
                    };
                    let zero_prob = core_out[rb.start];
                    let g_rep: Vec<S> = replaced.iter().map(|&o| g[o - 1]).collect();
                    g_core[rb.start] = g_rep.iter().zip(&probs).map(|(&a, &b)| a * b).sum();
                    for (j, &o) in kept.iter().enumerate() {
                        g_core[rb.start + j + 1] = g[o - 1];
                    }
                    if w > 0 {
                        let g_probs: Vec<S> = g_rep.iter().map(|&a| a * zero_prob).collect();
                        g_side.extend(softmax_vjp(&probs, &g_probs));
                        cursor += w;
                    }
                }
            }
        }
        let mut out = self.core.vjp(core_in, &g_core);
        out.extend(g_side);
        out
    }

    /// Facet-tie margin of the constraints core at `input` (see
    /// [`PolytopeMap::facet_gap`]); `None` for other heads.
    pub fn constraints_facet_gap(&self, input: &[S]) -> Option<S> {
        match &self.core {
            Core::Constraints { map } => {
                let s = map.system().width();
                map.facet_gap(&input[..s])
            }
            _ => None,
        }
    }
}

fn side_distributions<S: Scalar>(exp: &Expansion, logits: &[S]) -> Vec<Vec<S>> {
    let mut cursor = 0;
    exp.sides
        .iter()
        .map(|side| match side {
            Side::None => Vec::new(),
            Side::Replaced { width: 1 } => vec![S::one()],
            Side::Untouched { width } | Side::Replaced { width } => {
                let out = softmax(&logits[cursor..cursor + width]);
                cursor += width;
                out
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::compile_cnf;
    use crate::polytope::{clauses_to_inequalities, interior_point};
    use crate::rules::parse_rules;
    use crate::schema::fixtures::woodpecker;
    use crate::state_space::{admissible_mask, placement_matrix, vertex_matrix};

    const RULE: &str = "IF head = red AND bill IN {dagger, allpurpose} THEN bird = rhw";
    const CENTROID: [f64; 7] = [0.6, 0.4, 0.4, 0.6, 0.4, 0.3, 0.3];

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn heads() -> Vec<HeadSpec<f64>> {
        let w = woodpecker();
        let ast = parse_rules(RULE, &w).unwrap();
        let mask = admissible_mask(&ast, &w, 100).unwrap();
        let placement = placement_matrix(&mask);
        let v = vertex_matrix(&mask, &w, 1000).unwrap();
        let sys = clauses_to_inequalities(&compile_cnf(&ast, &w, 100).unwrap(), &w);
        let map = PolytopeMap::new(sys, interior_point(&v));
        vec![
            HeadSpec::base(&w, &mask),
            HeadSpec::admissible_state(&w, &placement),
            HeadSpec::vertex(&w, v),
            HeadSpec::constraints(&w, map),
        ]
    }

    #[test]
    fn widths() {
        let widths: Vec<usize> = heads().iter().map(|h| h.input_width()).collect();
        assert_eq!(widths, vec![12, 10, 10, 8]);
    }

    #[test]
    fn equal_logits_give_centroid() {
        for head in heads().iter().take(3) {
            let p = head.forward(&vec![0.3; head.input_width()]);
            assert!(close(p.as_slice(), &CENTROID, 1e-12), "{:?}", head.kind());
        }
        let constraints = &heads()[3];
        let mut z = vec![0.0; 8];
        z[7] = -40.0;
        z[0] = 3.0;
        assert!(close(constraints.forward(&z).as_slice(), &CENTROID, 1e-12));
    }

    #[test]
    fn base_head_ignores_inadmissible_logits() {
        let base = &heads()[0];
        let mut hi = vec![0.1; 12];
        let mut lo = vec![0.1; 12];
        hi[7] = 20.0;
        lo[7] = -20.0;
        assert_eq!(base.forward(&hi), base.forward(&lo));
    }

    #[test]
    fn base_head_without_rules_is_plain_softmax_marginal() {
        let w = woodpecker();
        let head = HeadSpec::<f64>::base(&w, &AdmissibleMask::all_ones(12));
        let mut z = vec![0.0; 12];
        z[0] = 2f64.ln();
        let p = head.forward(&z);
        // state 1 has weight 2/13, the rest 1/13
        let expected = crate::state_space::marginalize(
            &(0..12).map(|k| if k == 0 { 2.0 / 13.0 } else { 1.0 / 13.0 }).collect::<Vec<f64>>(),
            &w,
        )
        .unwrap();
        assert!(close(p.as_slice(), expected.as_slice(), 1e-15));
    }

    #[test]
    fn as_and_vertex_agree_and_saturate() {
        let hs = heads();
        let z = [0.3, -1.2, 2.0, 0.0, 0.5, -0.7, 1.1, 0.9, -2.0, 0.4];
        let a = hs[1].forward(&z);
        let b = hs[2].forward(&z);
        assert!(close(a.as_slice(), b.as_slice(), 1e-12));
        let mut spike = [0.0; 10];
        spike[7] = 40.0;
        // slot 7 is state 10 = (2,2,1)
        assert!(close(hs[2].forward(&spike).as_slice(), &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn single_admissible_state() {
        let w = woodpecker();
        let ast = parse_rules("bird = rhw AND head = green AND bill = dagger", &w).unwrap();
        let mask = admissible_mask(&ast, &w, 100).unwrap();
        let head = HeadSpec::<f64>::admissible_state(&w, &placement_matrix(&mask));
        assert_eq!(head.input_width(), 1);
        assert_eq!(head.forward(&[-3.0]).as_slice(), &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        for head in heads() {
            let z: Vec<f64> = (0..head.input_width()).map(|k| (k as f64 * 0.37).sin()).collect();
            let g = head.vjp(&z, &[0.0; 7]);
            assert!(g.iter().all(|&x| x == 0.0), "{:?}", head.kind());
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("AS".parse::<HeadKind>().unwrap(), HeadKind::AdmissibleState);
        assert_eq!("vertex".parse::<HeadKind>().unwrap(), HeadKind::Vertex);
        assert!("joint".parse::<HeadKind>().is_err());
        assert_eq!(serde_json::to_string(&HeadKind::AdmissibleState).unwrap(), "\"as\"");
    }
}
