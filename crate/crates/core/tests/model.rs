mod common;

use std::sync::Arc;

use common::{assert_close, assert_vec_close, random_matrix, random_point, rng, small_config, toy_graph, toy_split};
use curvgnn::manifold::{ambient_to_stereo, exp_origin, log_origin, mobius_add, stereo_to_ambient};
use curvgnn::model::{aggregate, forward, fuse, layer, transform, Dropout, LayerVars, ModelVars, State};
use curvgnn::training::{fused_embedding, Prepared};
use curvgnn::{
    build_atlas, lp_loss, nc_log_probs, nc_loss, normalize_adjacency, reference_gcn_forward, Error, ManifoldKind,
    ManifoldPoint, ManifoldSet, ModelConfig, ModelParams, SplitManifest,
};
use curvgnn_autodiff::{grad_check, CsrMatrix, Matrix, Tape, Var};
use ndarray::Array2;

const H: ManifoldKind = ManifoldKind::Hyperbolic;
const S: ManifoldKind = ManifoldKind::Spherical;
const E: ManifoldKind = ManifoldKind::Euclidean;

fn config(manifolds: ManifoldSet) -> ModelConfig {
    ModelConfig { in_dim: 4, hidden_dim: 5, num_layers: 2, dropout: 0.0, manifolds }
}

fn toy_inputs() -> (Arc<CsrMatrix>, Arc<CsrMatrix>) {
    let g = toy_graph();
    (Arc::new(CsrMatrix::from_dense(&g.features)), normalize_adjacency(g.num_nodes, &g.edges).unwrap().matrix)
}

fn run(params: &ModelParams, manifolds: ManifoldSet) -> Vec<(ManifoldKind, Matrix)> {
    let (x, a) = toy_inputs();
    let tape = Tape::new();
    let vars = params.to_vars(&tape, false);
    forward(&x, &a, &vars, manifolds, None).unwrap().values().unwrap()
}

fn randomize_cross(params: &mut ModelParams, seed: u64) {
    let mut r = rng(seed);
    for l in &mut params.layers {
        l.cross = random_matrix(&mut r, 1, 6, 0.8);
        l.bias_e = random_matrix(&mut r, 1, l.bias_e.ncols(), 0.3);
        l.bias_h = random_matrix(&mut r, 1, l.bias_h.ncols(), 0.3);
        l.bias_s = random_matrix(&mut r, 1, l.bias_s.ncols(), 0.3);
    }
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Matrix {
    Array2::from_shape_vec((rows.len(), rows[0].len()), rows.concat()).unwrap()
}

#[test]
fn manifold_set_parsing() {
    let s: ManifoldSet = "EHS".parse().unwrap();
    assert_eq!(s, ManifoldSet::EHS);
    assert_eq!("rh".parse::<ManifoldSet>().unwrap().to_string(), "EH");
    assert_eq!("SE".parse::<ManifoldSet>().unwrap().to_string(), "ES");
    for bad in ["", "EE", "X", "HSH"] {
        assert!(matches!(bad.parse::<ManifoldSet>(), Err(Error::Config(_))), "{bad}");
    }
    let all: Vec<String> = ManifoldSet::all().iter().map(|m| m.to_string()).collect();
    assert_eq!(all, ["E", "H", "S", "EH", "ES", "HS", "EHS"]);
    assert_eq!(serde_json::to_string(&ManifoldSet::EHS).unwrap(), "\"EHS\"");
    assert_eq!(serde_json::from_str::<ManifoldSet>("\"HS\"").unwrap().kinds(), vec![H, S]);
}

#[test]
fn init_shapes_and_zero_cross() {
    let p = ModelParams::init(&config(ManifoldSet::EHS), &mut rng(0));
    assert_eq!(p.lift_weight.dim(), (4, 5));
    assert_eq!(p.layers.len(), 2);
    for l in &p.layers {
        assert_eq!(l.weight.dim(), (5, 5));
        assert!(l.cross.iter().all(|&v| v == 0.0));
        assert!(l.bias_h.iter().all(|&v| v == 0.0));
    }
    let limit = (6.0f64 / 9.0).sqrt();
    assert!(p.lift_weight.iter().all(|v| v.abs() <= limit));
    assert_eq!(p.flatten().len(), p.names().len());
    let mut q = p.clone();
    q.assign(&p.flatten()).unwrap();
    assert_eq!(q, p);
    assert!(q.assign(&p.flatten()[1..]).is_err());
}

#[test]
fn zero_cross_scalars_decouple_the_branches() {
    let mut p = ModelParams::init(&config(ManifoldSet::EHS), &mut rng(1));
    randomize_cross(&mut p, 2);
    for l in &mut p.layers {
        l.cross.fill(0.0);
    }
    let joint = run(&p, ManifoldSet::EHS);
    for (kind, m) in &joint {
        let single = ManifoldSet { euclidean: *kind == E, hyperbolic: *kind == H, spherical: *kind == S };
        let alone = run(&p, single);
        assert_eq!(alone.len(), 1);
        for (a, b) in m.iter().zip(alone[0].1.iter()) {
            assert_close(*a, *b, 1e-9);
        }
    }
}

#[test]
fn euclidean_only_matches_plain_gcn_exactly() {
    let mut p = ModelParams::init(&config(ManifoldSet::E), &mut rng(3));
    randomize_cross(&mut p, 4);
    p.lift_bias = random_matrix(&mut rng(5), 1, 5, 0.5);
    let out = run(&p, ManifoldSet::E);
    let g = toy_graph();
    let (x, a) = toy_inputs();
    let reference = reference_gcn_forward(&x, &a, &p).unwrap();
    assert_eq!(out[0].0, E);
    assert_eq!(out[0].1, reference);
    assert_eq!(reference.dim(), (g.num_nodes, 5));
}

#[test]
fn outputs_stay_on_their_manifolds() {
    for seed in 0..5 {
        let mut p = ModelParams::init(&config(ManifoldSet::EHS), &mut rng(seed));
        randomize_cross(&mut p, seed + 100);
        for (kind, m) in run(&p, ManifoldSet::EHS) {
            assert_eq!(m.ncols(), kind.ambient_dim(5));
            for row in rows_of(&m) {
                ManifoldPoint::new(kind, row).unwrap().check(1e-9).unwrap();
            }
        }
    }
}

#[test]
fn transform_examples() {
    let tape = Tape::new();
    let x = Matrix::from_shape_vec((2, 2), vec![1.0, -2.0, 0.5, 0.0]).unwrap();
    let mut vars = ModelParams::init(&ModelConfig { in_dim: 2, hidden_dim: 2, num_layers: 1, dropout: 0.0, manifolds: ManifoldSet::EHS }, &mut rng(0))
        .to_vars(&tape, false);
    let l: &mut LayerVars = &mut vars.layers[0];
    l.weight = tape.constant(Matrix::from_shape_vec((2, 2), vec![0.0, 1.0, 2.0, 0.0]).unwrap());
    l.bias_e = tape.constant(Matrix::from_shape_vec((1, 2), vec![0.5, 0.5]).unwrap());
    let state = State { e: Some(tape.constant(x.clone())), h: None, s: None };
    let out = transform(&state, l, None).unwrap().e.unwrap().value().unwrap();
    assert_eq!(rows_of(&out), vec![vec![-1.5, 2.5], vec![0.5, 1.5]]);

    l.weight = tape.constant(Matrix::eye(2));
    let hx = from_rows(&[exp_origin(H, &[0.3, -0.4]).unwrap().into_coords(), exp_origin(H, &[1.0, 0.2]).unwrap().into_coords()]);
    let state = State { e: None, h: Some(tape.constant(hx.clone())), s: None };
    let out = transform(&state, l, None).unwrap().h.unwrap().value().unwrap();
    for (a, b) in out.iter().zip(hx.iter()) {
        assert_close(*a, *b, 1e-12);
    }
}

#[test]
fn aggregate_examples() {
    let tape = Tape::new();
    let adj = normalize_adjacency(2, &[(0, 1)]).unwrap().matrix;
    let e = Matrix::from_shape_vec((2, 2), vec![1.0, -3.0, 2.0, 1.0]).unwrap();
    let state = State { e: Some(tape.constant(e)), h: None, s: None };
    let out = aggregate(&state, &adj, true).unwrap().e.unwrap().value().unwrap();
    assert_eq!(rows_of(&out), vec![vec![1.5, 0.0], vec![1.5, 0.0]]);

    let (u, v) = ([0.4, -0.2], [0.1, 0.6]);
    let sx = from_rows(&[exp_origin(S, &u).unwrap().into_coords(), exp_origin(S, &v).unwrap().into_coords()]);
    let state = State { e: None, h: None, s: Some(tape.constant(sx)) };
    let out = aggregate(&state, &adj, false).unwrap().s.unwrap().value().unwrap();
    let expected = exp_origin(S, &[0.25, 0.2]).unwrap().into_coords();
    for row in rows_of(&out) {
        assert_vec_close(&row, &expected, 1e-12);
    }
}

#[test]
fn fuse_matches_manifold_arithmetic() {
    let mut r = rng(11);
    let e_rows: Vec<Vec<f64>> = (0..3).map(|_| random_matrix(&mut r, 1, 3, 0.7).into_raw_vec_and_offset().0).collect();
    let h_pts: Vec<ManifoldPoint> = (0..3).map(|_| random_point(&mut r, H, 3, 1.2)).collect();
    let s_pts: Vec<ManifoldPoint> = (0..3).map(|_| random_point(&mut r, S, 3, 1.2)).collect();
    let lambda = 0.5;

    let tape = Tape::new();
    let mut vars = ModelParams::init(&ModelConfig { in_dim: 3, hidden_dim: 3, num_layers: 1, dropout: 0.0, manifolds: ManifoldSet::EHS }, &mut rng(0))
        .to_vars(&tape, false);
    vars.layers[0].cross = tape.constant(Matrix::from_elem((1, 6), lambda));
    let state = State {
        e: Some(tape.constant(from_rows(&e_rows))),
        h: Some(tape.constant(from_rows(&h_pts.iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>()))),
        s: Some(tape.constant(from_rows(&s_pts.iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>()))),
    };
    let fused = fuse(&state, &vars.layers[0]).unwrap();
    let (fe, fh, fs) = (
        rows_of(&fused.e.unwrap().value().unwrap()),
        rows_of(&fused.h.unwrap().value().unwrap()),
        rows_of(&fused.s.unwrap().value().unwrap()),
    );

    let scale = |v: &[f64]| v.iter().map(|x| x * lambda).collect::<Vec<f64>>();
    let curved = |kind: ManifoldKind, e: &[f64], own: &ManifoldPoint, other: &ManifoldPoint| {
        let kappa = kind.curvature();
        let a = ambient_to_stereo(&exp_origin(kind, &scale(e)).unwrap()).unwrap();
        let b = ambient_to_stereo(own).unwrap();
        let c = ambient_to_stereo(&exp_origin(kind, &scale(&log_origin(other).unwrap())).unwrap()).unwrap();
        let u = mobius_add(&mobius_add(&a, &b, kappa).unwrap(), &c, kappa).unwrap();
        stereo_to_ambient(&u, kind).unwrap().into_coords()
    };
    for i in 0..3 {
        let lh = log_origin(&h_pts[i]).unwrap();
        let ls = log_origin(&s_pts[i]).unwrap();
        let expected_e: Vec<f64> = (0..3).map(|j| e_rows[i][j] + lambda * lh[j] + lambda * ls[j]).collect();
        assert_vec_close(&fe[i], &expected_e, 1e-12);
        assert_vec_close(&fh[i], &curved(H, &e_rows[i], &h_pts[i], &s_pts[i]), 1e-10);
        assert_vec_close(&fs[i], &curved(S, &e_rows[i], &s_pts[i], &h_pts[i]), 1e-10);
    }
}

#[test]
fn fuse_without_partners_is_the_identity() {
    let tape = Tape::new();
    let vars = ModelParams::init(&ModelConfig { in_dim: 2, hidden_dim: 2, num_layers: 1, dropout: 0.0, manifolds: ManifoldSet::EHS }, &mut rng(0))
        .to_vars(&tape, false);
    let h = tape.constant(from_rows(&[exp_origin(H, &[0.2, 0.9]).unwrap().into_coords()]));
    let state = State { e: None, h: Some(h), s: None };
    assert_eq!(fuse(&state, &vars.layers[0]).unwrap().h.unwrap().value().unwrap(), h.value().unwrap());
}

fn model_vars<'t>(p: &[Var<'t>], layers: usize) -> ModelVars<'t> {
    ModelVars {
        lift_weight: p[0],
        lift_bias: p[1],
        layers: (0..layers)
            .map(|i| {
                let c = &p[2 + 5 * i..];
                LayerVars { weight: c[0], bias_e: c[1], bias_h: c[2], bias_s: c[3], cross: c[4] }
            })
            .collect(),
    }
}

#[test]
fn single_layer_gradients_match_finite_differences() {
    let mut p = ModelParams::init(&ModelConfig { in_dim: 4, hidden_dim: 3, num_layers: 1, dropout: 0.0, manifolds: ManifoldSet::EHS }, &mut rng(7));
    randomize_cross(&mut p, 8);
    let (_, adj) = toy_inputs();
    let mut r = rng(9);
    let e0 = random_matrix(&mut r, 6, 3, 0.5);
    let h0 = from_rows(&(0..6).map(|_| random_point(&mut r, H, 3, 1.0).into_coords()).collect::<Vec<_>>());
    let s0 = from_rows(&(0..6).map(|_| random_point(&mut r, S, 3, 1.0).into_coords()).collect::<Vec<_>>());
    let weights = random_matrix(&mut r, 6, 3, 1.0);
    let report = grad_check(
        |tape, v| {
            let lv = LayerVars { weight: v[0], bias_e: v[1], bias_h: v[2], bias_s: v[3], cross: v[4] };
            let state = State { e: Some(tape.constant(e0.clone())), h: Some(tape.constant(h0.clone())), s: Some(tape.constant(s0.clone())) };
            let out = layer(&state, &lv, &adj, true, None)?;
            let w = tape.constant(weights.clone());
            let mut total = out.e.unwrap().mul(w)?.sum()?;
            for x in [out.h.unwrap(), out.s.unwrap()] {
                total = total.add(x.slice_cols(1, 4)?.mul(w)?.sum()?)?;
            }
            Ok(total)
        },
        &p.flatten()[2..],
        1e-6,
        1e-5,
    )
    .unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let g = toy_graph();
    for (task, manifolds) in [("nc", ManifoldSet::EHS), ("lp", ManifoldSet::EHS), ("nc", "HS".parse().unwrap())] {
        let split = if task == "nc" {
            toy_split()
        } else {
            SplitManifest::Lp {
                seed: 0,
                train: vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5)],
                val: vec![(2, 3)],
                test: vec![(4, 5)],
                neg_val: vec![(0, 5)],
                neg_test: vec![(1, 4)],
            }
        };
        let prep = Prepared::new(&g, &split).unwrap();
        let mut p = ModelParams::init(&ModelConfig { in_dim: 4, hidden_dim: 4, num_layers: 2, dropout: 0.0, manifolds }, &mut rng(21));
        randomize_cross(&mut p, 22);
        let atlas = build_atlas(&small_config().coreset(), 4).unwrap();
        let mut params = p.flatten();
        params.push(random_matrix(&mut rng(23), 2, 6, 1.0));
        let report = grad_check(
            |_, v| {
                let vars = model_vars(v, 2);
                let (_, fused) = fused_embedding(&prep, &vars, manifolds, &atlas, None).map_err(tensor)?;
                if task == "nc" {
                    let lp = nc_log_probs(fused, v[12])?;
                    nc_loss(lp, &g.labels, &[0, 1, 2, 3, 4, 5]).map_err(tensor)
                } else {
                    let v12 = v[12].sum()?.scale(0.0)?;
                    lp_loss(fused, &[(0, 1), (2, 3), (4, 5)], &[(0, 5), (1, 4)], 2.0, 1.0).map_err(tensor)?.add(v12)
                }
            },
            &params,
            1e-6,
            1e-5,
        )
        .unwrap();
        assert!(report.pass, "{task} {manifolds}: {report:?}");
    }
}

fn tensor(e: Error) -> curvgnn_autodiff::TensorError {
    match e {
        Error::Tensor(t) => t,
        other => panic!("{other}"),
    }
}

#[test]
fn forward_is_deterministic_including_dropout() {
    let p = ModelParams::init(&config(ManifoldSet::EHS), &mut rng(31));
    assert_eq!(p, ModelParams::init(&config(ManifoldSet::EHS), &mut rng(31)));
    let (x, a) = toy_inputs();
    let once = || {
        let tape = Tape::new();
        let vars = p.to_vars(&tape, false);
        let mut r = rng(32);
        let mut d = Dropout { rate: 0.5, rng: &mut r };
        forward(&x, &a, &vars, ManifoldSet::EHS, Some(&mut d)).unwrap().values().unwrap()
    };
    assert_eq!(once(), once());
    let tape = Tape::new();
    let vars = p.to_vars(&tape, false);
    let no_drop = forward(&x, &a, &vars, ManifoldSet::EHS, None).unwrap().values().unwrap();
    assert_ne!(once(), no_drop);
}
