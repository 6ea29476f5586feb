use pwomm::harness::{run_experiment, Experiment, ExperimentConfig, Method, TestId};

fn iters(exp: &Experiment, m: Method) -> Vec<usize> {
    exp.runs.iter().filter(|r| r.method == m).map(|r| r.iterations().unwrap()).collect()
}

#[test]
fn table_one_shape() {
    let cfg = ExperimentConfig { pts_per_cell: 4, repeats: 2, ..ExperimentConfig::for_test(TestId::Test1, vec![3, 5]) };
    let exp = run_experiment(&cfg).unwrap();
    assert_eq!(exp.rows.len(), 3 * 2);
    let shape: Vec<(String, usize, usize)> = exp.rows.iter().map(|r| (r.method.clone(), r.ell, r.n)).collect();
    assert_eq!(shape[0], ("tpa".to_string(), 3, 144));
    assert_eq!(shape[5], ("pp".to_string(), 5, 400));
    assert!(exp.all_succeeded(), "{:?}", exp.rows);
    // the projection preconditioner wins on every seed
    for ell in [3, 5] {
        let pick = |m| exp.runs.iter().filter(|r| r.method == m && r.ell == ell).map(|r| r.iterations().unwrap()).collect::<Vec<_>>();
        let pp = pick(Method::Pp);
        for other in [pick(Method::Tpa), pick(Method::Gtpa(5))] {
            assert!(pp.iter().zip(&other).all(|(a, b)| a <= b), "{pp:?} vs {other:?}");
        }
    }
}

#[test]
fn sparsified_projection_beats_tpa_on_test3() {
    let cfg = ExperimentConfig { repeats: 3, methods: vec![Method::Tpa, Method::Gtpa(5), Method::Spp], ..ExperimentConfig::for_test(TestId::Test3, vec![2]) };
    let exp = run_experiment(&cfg).unwrap();
    let (tpa, gtpa, spp) = (&exp.rows[0], &exp.rows[1], &exp.rows[2]);
    assert!(spp.iter <= tpa.iter / 20.0, "{} vs {}", spp.iter, tpa.iter);
    let s = iters(&exp, Method::Spp);
    for other in [iters(&exp, Method::Tpa), iters(&exp, Method::Gtpa(5))] {
        assert!(s.iter().zip(&other).all(|(a, b)| a <= b));
    }
    assert!(spp.status.succeeded() && spp.d <= 1e-6);
    assert!(gtpa.iter > spp.iter);
}

#[test]
fn unpreconditioned_toy_converges() {
    let cfg = ExperimentConfig { repeats: 2, methods: vec![Method::None, Method::Pp], ..ExperimentConfig::for_test(TestId::Test1, vec![1]) };
    let exp = run_experiment(&cfg).unwrap();
    assert!(exp.all_succeeded(), "{:?}", exp.rows);
    assert_eq!(exp.rows[0].n, 64);
    assert!(exp.rows[0].iter >= exp.rows[1].iter);
}
