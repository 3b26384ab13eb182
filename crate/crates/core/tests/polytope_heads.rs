mod common;

use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rulehead::compile::{compile, CompileOptions};
use rulehead::logic::{compile_cnf, DEFAULT_CLAUSE_BUDGET};
use rulehead::polytope::{clauses_to_inequalities, interior_point, lp_max, map_to_polytope, rational_from_f64};
use rulehead::state_space::{
    admissible_mask, decode_state, encode_state, marginalize, placement_matrix, vertex_matrix,
};
use rulehead::HeadKind;

#[test]
fn encode_decode_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let schema = common::random_schema(&mut rng, 4, 4);
        for k in 1..=schema.total_states().unwrap() {
            assert_eq!(encode_state(&decode_state(k, &schema).unwrap(), &schema), k);
        }
        assert!(decode_state(0, &schema).is_err());
        assert!(decode_state(schema.total_states().unwrap() + 1, &schema).is_err());
    }
}

#[test]
fn vertex_matrix_equals_marginalized_placement() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let schema = common::random_schema(&mut rng, 4, 4);
        let ast = common::random_satisfiable(&mut rng, &schema, 4);
        let mask = admissible_mask(&ast, &schema, 1 << 20).unwrap();
        let w = placement_matrix(&mask);
        let v = vertex_matrix::<f64>(&mask, &schema, 1 << 24).unwrap();
        let weights = common::random_simplex(&mut rng, w.admissible_count());
        let joint = w.place(&weights);
        // W π̃ puts no mass on inadmissible states
        let mass: f64 = joint.iter().zip(mask.bits()).filter(|(_, &b)| b).map(|(p, _)| p).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let a = marginalize(&joint, &schema).unwrap();
        let b = v.mul(&weights);
        for (x, y) in a.as_slice().iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn admissible_marginals_satisfy_every_clause() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let schema = common::random_schema(&mut rng, 4, 4);
        let ast = common::random_satisfiable(&mut rng, &schema, 4);
        let Ok(cnf) = compile_cnf(&ast, &schema, DEFAULT_CLAUSE_BUDGET) else { continue };
        let sys = clauses_to_inequalities(&cnf, &schema);
        let mask = admissible_mask(&ast, &schema, 1 << 20).unwrap();
        let w = placement_matrix(&mask);
        for _ in 0..500 {
            let p = marginalize(&w.place(&common::random_simplex(&mut rng, w.admissible_count())), &schema).unwrap();
            assert!(sys.contains(p.as_slice(), 1e-9));
        }
    }
}

#[test]
fn exact_and_float_lp_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10 {
        let schema = common::random_schema(&mut rng, 3, 3);
        let ast = common::random_satisfiable(&mut rng, &schema, 3);
        let Ok(cnf) = compile_cnf(&ast, &schema, DEFAULT_CLAUSE_BUDGET) else { continue };
        let sys = clauses_to_inequalities(&cnf, &schema);
        let c: Vec<f64> = (0..schema.marginal_width()).map(|_| rng.gen_range(-4..=4) as f64).collect();
        let float = lp_max(&sys, &c).unwrap();
        let exact = lp_max(&sys, &c.iter().map(|&x| rational_from_f64(x)).collect::<Vec<BigRational>>()).unwrap();
        let exact_value = exact.value.numer().to_string().parse::<f64>().unwrap()
            / exact.value.denom().to_string().parse::<f64>().unwrap();
        assert!((float.value - exact_value).abs() < 1e-9);
    }
}

#[test]
fn constraints_map_stays_inside_and_keeps_frozen_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..20 {
        let schema = common::random_schema(&mut rng, 4, 4);
        let ast = common::random_satisfiable(&mut rng, &schema, 4);
        let Ok(cnf) = compile_cnf(&ast, &schema, DEFAULT_CLAUSE_BUDGET) else { continue };
        let sys = clauses_to_inequalities(&cnf, &schema);
        let mask = admissible_mask(&ast, &schema, 1 << 20).unwrap();
        let x0 = interior_point(&vertex_matrix::<f64>(&mask, &schema, 1 << 24).unwrap());
        assert!(sys.contains(&x0.point, 1e-12));
        for _ in 0..200 {
            let dir = common::random_vec(&mut rng, schema.marginal_width(), 10.0);
            let out = map_to_polytope(&dir, rng.gen_range(0.0..1.0), &x0, &sys);
            assert!(sys.contains(&out, 1e-9));
            for &j in &x0.frozen {
                assert!((out[j] - x0.point[j]).abs() < 1e-12);
            }
        }
    }
}

fn head_case(seed: u64, kind: HeadKind, reduce: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = common::random_schema(&mut rng, 4, 4);
    let ast = common::random_satisfiable(&mut rng, &schema, 4);
    let opts = CompileOptions {
        reduce,
        ..CompileOptions::with_head(kind)
    };
    let c = match compile(&schema, &ast, opts) {
        Ok(c) => c,
        Err(rulehead::Error::CnfExplosion { .. }) => return,
        Err(e) => panic!("{e}"),
    };
    let head = &c.head;
    for _ in 0..50 {
        let z = common::random_vec(&mut rng, head.input_width(), 6.0);
        let p = head.forward(&z);
        assert!(p.is_valid(&schema, 1e-9));
        if let Some(sys) = &c.artifact.verification {
            assert!(sys.contains(p.as_slice(), 1e-6));
        }
    }
    // gradient spot check
    let z = common::random_vec(&mut rng, head.input_width(), 1.5);
    if head.constraints_facet_gap(&z).is_some_and(|g| g < 1e-3) {
        return;
    }
    let cot = common::random_vec(&mut rng, head.output_width(), 1.0);
    let g = head.vjp(&z, &cot);
    let f = |z: &[f64]| -> f64 { head.forward(z).as_slice().iter().zip(&cot).map(|(a, b)| a * b).sum() };
    let h = 1e-5;
    let mut zp = z.clone();
    for k in 0..z.len() {
        zp[k] = z[k] + h;
        let up = f(&zp);
        zp[k] = z[k] - h;
        let down = f(&zp);
        zp[k] = z[k];
        let fd = (up - down) / (2.0 * h);
        assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + fd.abs()), "{kind}: {fd} vs {}", g[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn heads_are_feasible_and_differentiable(
        seed in any::<u64>(),
        kind in prop_oneof![
            Just(HeadKind::Base),
            Just(HeadKind::AdmissibleState),
            Just(HeadKind::Vertex),
            Just(HeadKind::Constraints),
            Just(HeadKind::Independent),
        ],
        reduce in any::<bool>(),
    ) {
        head_case(seed, kind, reduce);
    }
}

#[test]
fn f32_heads_match_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let schema = common::random_schema(&mut rng, 3, 3);
    let ast = common::random_satisfiable(&mut rng, &schema, 3);
    for kind in [HeadKind::Base, HeadKind::AdmissibleState, HeadKind::Vertex, HeadKind::Constraints] {
        let c = compile(&schema, &ast, CompileOptions::with_head(kind)).unwrap();
        let h32 = c.head_in::<f32>().unwrap();
        let z = common::random_vec(&mut rng, c.head.input_width(), 2.0);
        let z32: Vec<f32> = z.iter().map(|&x| x as f32).collect();
        let a = c.head.forward(&z);
        let b = h32.forward(&z32);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }
}
