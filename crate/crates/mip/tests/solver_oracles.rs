//! The simplex and the binary enumerator against brute-force vertex enumeration.

use promptsim_mip::{
    enumerate_binaries_solve, simplex_solve, Expr, MipModel, ObjectiveSense, Sense, Status, VarId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `a x (sense) b` rows over `n` variables, all boxed in `[0, ub]`.
struct SmallLp {
    n: usize,
    rows: Vec<(Vec<f64>, Sense, f64)>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    constant: f64,
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best objective (maximization) over all basic solutions, or `None` if infeasible.
fn vertex_optimum(lp: &SmallLp) -> Option<f64> {
    let mut planes: Vec<(Vec<f64>, f64)> = lp.rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
    for j in 0..lp.n {
        let mut e = vec![0.0; lp.n];
        e[j] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, lp.ub[j]));
    }
    let feasible = |x: &[f64]| {
        x.iter().zip(&lp.ub).all(|(&v, &u)| v >= -1e-7 && v <= u + 1e-7)
            && lp.rows.iter().all(|(a, s, b)| {
                let lhs: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
                s.holds(lhs, *b, 1e-7)
            })
    };
    let mut best: Option<f64> = None;
    let k = planes.len();
    let mut pick = vec![0usize; lp.n];
    fn rec(
        depth: usize,
        start: usize,
        k: usize,
        pick: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if depth == pick.len() {
            f(pick);
            return;
        }
        for i in start..k {
            pick[depth] = i;
            rec(depth + 1, i + 1, k, pick, f);
        }
    }
    rec(0, 0, k, &mut pick, &mut |idx: &[usize]| {
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v: f64 = lp.constant + lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
    });
    best
}

fn random_lp(rng: &mut ChaCha8Rng) -> SmallLp {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=4);
    let senses = [Sense::Le, Sense::Ge, Sense::Eq];
    let rows = (0..m)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3i32..=3) as f64).collect();
            let kinds = if rng.random_bool(0.2) { 3 } else { 2 };
            let s = senses[rng.random_range(0..kinds)];
            (a, s, rng.random_range(-4i32..=8) as f64)
        })
        .collect();
    SmallLp {
        n,
        rows,
        ub: (0..n).map(|_| rng.random_range(1..=5) as f64).collect(),
        cost: (0..n).map(|_| rng.random_range(-4i32..=4) as f64).collect(),
        constant: 0.0,
    }
}

fn to_model(lp: &SmallLp) -> (MipModel, Vec<VarId>) {
    let mut m = MipModel::new("small", ObjectiveSense::Maximize);
    let xs: Vec<VarId> = (0..lp.n).map(|j| m.add_continuous(format!("x{j}"), 0.0, lp.ub[j]).unwrap()).collect();
    for (i, (a, s, b)) in lp.rows.iter().enumerate() {
        let mut e = Expr::new();
        for (j, &c) in a.iter().enumerate() {
            e.add_term(xs[j], c);
        }
        m.add_constraint(format!("r{i}"), e, *s, *b);
    }
    let mut obj = Expr::constant(lp.constant);
    for (j, &c) in lp.cost.iter().enumerate() {
        obj.add_term(xs[j], c);
    }
    m.set_objective(ObjectiveSense::Maximize, obj);
    (m, xs)
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut feasible, mut infeasible) = (0, 0);
    for case in 0..400 {
        let lp = random_lp(&mut rng);
        let (model, _) = to_model(&lp);
        let sol = simplex_solve(&model).unwrap();
        match vertex_optimum(&lp) {
            Some(best) => {
                feasible += 1;
                assert_eq!(sol.status, Status::Optimal, "case {case}");
                assert!((sol.objective - best).abs() < 1e-7, "case {case}: {} vs {best}", sol.objective);
                assert!(model.max_violation(&sol.values) < 1e-7, "case {case}");
            }
            None => {
                infeasible += 1;
                assert_eq!(sol.status, Status::Infeasible, "case {case}");
            }
        }
    }
    assert!(feasible > 100 && infeasible > 10, "{feasible} / {infeasible}");
}

#[test]
fn enumeration_matches_brute_force_with_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..150 {
        let nb = rng.random_range(1..=4);
        let base = random_lp(&mut rng);
        let nc = base.n;
        let mut m = MipModel::new("mixed", ObjectiveSense::Maximize);
        let bs: Vec<VarId> = (0..nb).map(|i| m.add_binary(format!("b{i}")).unwrap()).collect();
        let xs: Vec<VarId> = (0..nc).map(|j| m.add_continuous(format!("x{j}"), 0.0, base.ub[j]).unwrap()).collect();
        // Each row and the objective get binary-linear terms and binary*continuous products.
        let mut bin_lin = Vec::new();
        let mut gated = Vec::new();
        for _ in 0..=base.rows.len() {
            let lin: Vec<f64> = (0..nb).map(|_| rng.random_range(-3i32..=3) as f64).collect();
            let prod: Vec<(usize, usize, f64)> = (0..rng.random_range(0..=2))
                .map(|_| (rng.random_range(0..nb), rng.random_range(0..nc), rng.random_range(-2i32..=2) as f64))
                .collect();
            bin_lin.push(lin);
            gated.push(prod);
        }
        let build = |r: usize, a: &[f64]| {
            let mut e = Expr::new();
            for (j, &c) in a.iter().enumerate() {
                e.add_term(xs[j], c);
            }
            for (i, &c) in bin_lin[r].iter().enumerate() {
                e.add_term(bs[i], c);
            }
            for &(i, j, c) in &gated[r] {
                e.add_product(bs[i], xs[j], c);
            }
            e
        };
        for (r, (a, s, b)) in base.rows.iter().enumerate() {
            m.add_constraint(format!("r{r}"), build(r, a), *s, *b);
        }
        let obj_row = base.rows.len();
        m.set_objective(ObjectiveSense::Maximize, build(obj_row, &base.cost));

        // Brute force: every binary pattern, then the vertex oracle on the rest.
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << nb) {
            let bit = |i: usize| (mask >> i & 1) as f64;
            let fold = |r: usize, a: &[f64]| -> (Vec<f64>, f64) {
                let mut a = a.to_vec();
                for &(i, j, c) in &gated[r] {
                    a[j] += c * bit(i);
                }
                let k: f64 = bin_lin[r].iter().enumerate().map(|(i, c)| c * bit(i)).sum();
                (a, k)
            };
            let rows = base
                .rows
                .iter()
                .enumerate()
                .map(|(r, (a, s, b))| {
                    let (a, k) = fold(r, a);
                    (a, *s, b - k)
                })
                .collect();
            let (cost, constant) = fold(obj_row, &base.cost);
            let lp = SmallLp { n: nc, rows, ub: base.ub.clone(), cost, constant };
            if let Some(v) = vertex_optimum(&lp) {
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
        let sol = enumerate_binaries_solve(&m, 24).unwrap();
        match best {
            Some(v) => {
                assert_eq!(sol.status, Status::Optimal, "case {case}");
                assert!((sol.objective - v).abs() < 1e-7, "case {case}: {} vs {v}", sol.objective);
                assert!(m.max_violation(&sol.values) < 1e-7, "case {case}");
            }
            None => assert_eq!(sol.status, Status::Infeasible, "case {case}"),
        }
    }
}
