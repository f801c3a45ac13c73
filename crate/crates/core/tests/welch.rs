//! Welch's t-test against 50-digit reference values from
//! `fixtures/welch_fixtures.py`.

#![allow(clippy::excessive_precision)]

use talkitout::eval::{t_two_sided_p, welch_t_test};

struct Fixture {
    name: &'static str,
    a: Vec<f64>,
    b: Vec<f64>,
    t: f64,
    dof: f64,
    p: f64,
}

fn fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "table_eb_vs_baseline",
            a: vec![0.236, 0.246, 0.226],
            b: vec![0.996, 0.994, 0.998],
            t: -129.07958189248392,
            dof: 2.1597444089456869,
            p: 3.0768731107876123e-5,
        },
        Fixture {
            name: "close_means",
            a: vec![0.259, 0.27, 0.25, 0.262],
            b: vec![0.26, 0.24, 0.28, 0.255, 0.265],
            t: 0.032393177419586845,
            dof: 6.4667445155685937,
            p: 0.97513539813204004,
        },
        Fixture {
            name: "unequal_sizes",
            a: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            b: vec![2.0, 4.0, 6.0],
            t: -0.7385489458759964,
            dof: 3.5328467153284672,
            p: 0.50621417165284808,
        },
        Fixture {
            name: "one_constant",
            a: vec![0.5, 0.5, 0.5],
            b: vec![0.1, 0.4, 0.9, 0.2],
            t: 0.56195148694901638,
            dof: 3.0,
            p: 0.6133990129378548,
        },
        Fixture {
            name: "large_dof",
            a: (0..40).map(|i| (i % 7) as f64).collect(),
            b: (0..35).map(|i| (i % 5) as f64 + 0.3).collect(),
            t: 1.4475691039392944,
            dof: 70.550987967217679,
            p: 0.15216683414075405,
        },
    ]
}

#[test]
fn matches_reference_fixtures() {
    for f in fixtures() {
        let r = welch_t_test(&f.a, &f.b).unwrap();
        assert!((r.t - f.t).abs() <= 1e-9 * f.t.abs().max(1.0), "{}: t {}", f.name, r.t);
        assert!((r.dof - f.dof).abs() <= 1e-9 * f.dof, "{}: dof {}", f.name, r.dof);
        assert!((r.p - f.p).abs() <= 1e-6, "{}: p {}", f.name, r.p);
    }
}

#[test]
fn two_sided_p_table() {
    let rows = [
        (1.0, 1.0, 0.5),
        (3.0, 2.5, 0.087706647008065547),
        (10.0, 0.3, 0.77032060756579861),
        (30.0, 4.0, 0.00038184563608375684),
        (2.5, 12.0, 0.0028362150300783238),
        (100.0, 1.96, 0.052778901366229666),
    ];
    for (dof, t, want) in rows {
        let p = t_two_sided_p(t, dof);
        assert!((p - want).abs() <= 1e-6, "dof {dof} t {t}: {p}");
        assert_eq!(t_two_sided_p(-t, dof), p);
    }
}

#[test]
fn symmetry_and_trivial_cases() {
    for f in fixtures() {
        let ab = welch_t_test(&f.a, &f.b).unwrap();
        let ba = welch_t_test(&f.b, &f.a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p, ba.p);
        assert_eq!(ab.dof, ba.dof);
    }
    let same = welch_t_test(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap();
    assert_eq!((same.t, same.p), (0.0, 1.0));
    let flat = welch_t_test(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
    assert_eq!(flat.p, 1.0);
    let apart = welch_t_test(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    assert_eq!(apart.p, 0.0);
    assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
}
