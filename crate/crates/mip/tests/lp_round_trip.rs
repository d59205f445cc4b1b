use promptsim_mip::{parse_lp, write_lp, Expr, MipModel, ObjectiveSense, Sense, VarId, VarKind, Variable};
use proptest::prelude::*;

fn coefficient() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-20i32..=20).prop_map(f64::from),
        -1e3f64..1e3,
        (-1e-6f64..1e-6),
        Just(1.0 / 3.0),
        Just(-1.0),
        Just(2.5e17),
    ]
}

fn bound_pair() -> impl Strategy<Value = (f64, f64)> {
    prop_oneof![
        (-10.0f64..0.0, 0.0f64..10.0),
        (-5i32..5).prop_map(|l| (f64::from(l), f64::INFINITY)),
        (-5i32..5).prop_map(|u| (f64::NEG_INFINITY, f64::from(u))),
        Just((f64::NEG_INFINITY, f64::INFINITY)),
        Just((0.0, f64::INFINITY)),
    ]
}

prop_compose! {
    fn model()(
        nvars in 1usize..8,
        kinds in prop::collection::vec(any::<bool>(), 8),
        bounds in prop::collection::vec(bound_pair(), 8),
        rows in prop::collection::vec(
            (prop::collection::vec((0usize..8, coefficient()), 1..6), 0usize..3, coefficient()),
            0..6,
        ),
        obj in prop::collection::vec((0usize..8, coefficient()), 0..6),
        obj_const in coefficient(),
        maximize in any::<bool>(),
    ) -> MipModel {
        let sense = if maximize { ObjectiveSense::Maximize } else { ObjectiveSense::Minimize };
        let mut m = MipModel::new("prop_model", sense);
        m.metadata.insert("seed".into(), "42".into());
        for j in 0..nvars {
            let var = if kinds[j] {
                Variable { name: format!("b_{j}"), lower: 0.0, upper: 1.0, kind: VarKind::Binary }
            } else {
                Variable { name: format!("x{j}"), lower: bounds[j].0, upper: bounds[j].1, kind: VarKind::Continuous }
            };
            m.add_var(var).unwrap();
        }
        let senses = [Sense::Le, Sense::Ge, Sense::Eq];
        for (i, (terms, s, rhs)) in rows.into_iter().enumerate() {
            let mut e = Expr::new();
            for (v, c) in terms {
                e.add_term(VarId(v % nvars), c);
            }
            m.add_constraint(format!("row_{i}"), e, senses[s], rhs);
        }
        let mut e = Expr::constant(if obj.is_empty() { 0.0 } else { obj_const });
        for (v, c) in obj {
            e.add_term(VarId(v % nvars), c);
        }
        m.set_objective(sense, e);
        m
    }
}

proptest! {
    #[test]
    fn parse_inverts_write(m in model()) {
        let text = write_lp(&m).unwrap();
        let back = parse_lp(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(write_lp(&back).unwrap(), text);
    }
}

#[test]
fn escaped_names_reach_a_fixpoint() {
    let mut m = MipModel::new("esc", ObjectiveSense::Minimize);
    let a = m.add_continuous("pi[0,1]", 0.0, 1.0).unwrap();
    let b = m.add_continuous("2nd", 0.0, 1.0).unwrap();
    m.add_constraint("link a-b", Expr::var(a).with_term(b, -1.0), Sense::Eq, 0.0);
    m.set_objective(ObjectiveSense::Minimize, Expr::var(a));
    let first = write_lp(&m).unwrap();
    assert!(first.contains("pi_0_1_") && first.contains("v_2nd") && first.contains("link_a_b:"));
    let again = write_lp(&parse_lp(&first).unwrap()).unwrap();
    assert_eq!(again, first);
}

#[test]
fn long_rows_wrap_and_still_parse() {
    let mut m = MipModel::new("wide", ObjectiveSense::Maximize);
    let vars: Vec<VarId> = (0..200).map(|i| m.add_continuous(format!("variable_{i}"), 0.0, 1.0).unwrap()).collect();
    let mut e = Expr::new();
    for &v in &vars {
        e.add_term(v, 1.5);
    }
    m.add_constraint("sum", e.clone(), Sense::Le, 10.0);
    m.set_objective(ObjectiveSense::Maximize, e);
    let text = write_lp(&m).unwrap();
    assert!(text.lines().all(|l| l.len() <= 260));
    assert_eq!(parse_lp(&text).unwrap(), m);
}
