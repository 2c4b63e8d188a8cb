//! Acceptance suite: one test per criterion, each printing a one-line
//! verdict (run with `--nocapture` to see the measured numbers; the per-test
//! ok/FAILED line is the pass/fail record either way).

use std::time::Instant;

use salem_cli::sysspec::counterexample_system;
use salem_core::approxident::{constant_cp, mollified_limit_check, SurfaceChart};
use salem_core::configsearch::{
    atom_count_bound, c_epsilon_measure, make_colinear_system, make_parallelogram_system,
    make_triangle_system, make_vandermonde_system, search_configurations, ExceptionalSubspace,
    PointSet, DEFAULT_SEARCH_CAP,
};
use salem_core::fractal::{
    ball_condition_constant, ball_constants_per_scale, decay_exponent_fit, fourier_transform,
    gen_random_cantor, mollify, mollify_split, CantorMode, CantorParams, GridDensity, GridMeasure,
};
use salem_core::linalg::Mat;
use salem_core::linsys::{
    check_nondegenerate, check_reduced_nondegenerate, coordinate_chart_check,
    MatrixSystem,
};
use salem_core::multiform::{
    decomposition_terms, lambda_direct, lambda_fourier, lambda_star, Density, DirectQuadrature,
    Flag, FourierEval, MollifiedHat, PowerLawEnvelope,
};
use salem_core::rng::StreamRng;

fn ap_system() -> MatrixSystem {
    make_colinear_system(1, 2.0).unwrap()
}

fn cantor(stages: u32, seed: u64, grid: usize) -> GridMeasure {
    gen_random_cantor(
        &CantorParams {
            n: 1,
            subdivision: 4,
            keep: 2,
            stages,
            seed,
            mode: CantorMode::IndependentUniform,
        },
        grid,
    )
    .unwrap()
}

#[test]
fn acceptance_01_representation_equivalence() {
    let start = Instant::now();
    let sys = ap_system();
    let bump = GridDensity::bump(1, 1024, 0.1, 0.9).unwrap();
    let f = vec![Density::Sampled(bump.clone()); 3];
    let direct = lambda_direct(&sys, &f, &DirectQuadrature { grid: 1024, ..Default::default() })
        .unwrap()
        .value;
    let evals: Vec<&dyn FourierEval> = vec![&bump, &bump, &bump];
    let fourier = lambda_fourier(&sys, &evals, 64.0, 4096).unwrap();
    let rel = (fourier.value - direct).abs() / direct.abs();
    let secs = start.elapsed().as_secs_f64();
    println!(
        "criterion 01 representation equivalence: direct={direct:.6} fourier={:.6} rel={:.4} time={secs:.1}s",
        fourier.value, rel
    );
    assert!(rel <= 0.05, "relative difference {rel} exceeds 5%");
    assert!(fourier.imag.abs() <= 1e-6 * (fourier.value.abs() + 1.0));
    assert!(secs < 60.0, "runtime {secs}s exceeds 60s");
}

#[test]
fn acceptance_02_closed_form_volume() {
    let sys = ap_system();
    let f = vec![Density::BoxIndicator { lo: vec![0.0], hi: vec![1.0] }; 3];
    let r = lambda_direct(&sys, &f, &DirectQuadrature { grid: 1024, ..Default::default() }).unwrap();
    println!("criterion 02 closed-form volume: value={:.5} (want 0.5 +/- 0.02)", r.value);
    assert!((r.value - 0.5).abs() <= 0.02);
}

#[test]
fn acceptance_03_counterexample_exact_zero() {
    let sys = counterexample_system();
    let ball = Density::BallIndicator { center: vec![0.0, 1.0], radius: 0.25 };
    let f = vec![ball.clone(), ball.clone(), ball];
    let r = lambda_direct(&sys, &f, &DirectQuadrature::default()).unwrap();
    // the chart rank condition holds for every admissible (J, J')
    let mut charts = 0;
    for j in 0..3 {
        assert!(
            coordinate_chart_check(&sys, &[j], &[0, 1], 1e-9).unwrap(),
            "chart J = [{j}] failed"
        );
        charts += 1;
    }
    println!(
        "criterion 03 counterexample: value={} flags={:?} charts_checked={charts}",
        r.value, r.flags
    );
    assert_eq!(r.value, 0.0);
    assert!(r.flags.contains(&Flag::IntervalEmpty));
}

#[test]
fn acceptance_04_nondegeneracy_suite() {
    let start = Instant::now();
    let cases: Vec<(&str, MatrixSystem)> = vec![
        ("triangle(pi/2,1)", make_triangle_system(std::f64::consts::FRAC_PI_2, 1.0).unwrap()),
        ("colinear(2,2)", make_colinear_system(2, 2.0).unwrap()),
        ("parallelogram(1)", make_parallelogram_system(1).unwrap().0),
        ("parallelogram(2)", make_parallelogram_system(2).unwrap().0),
        ("vandermonde(2,3;1;1)", make_vandermonde_system(&[2.0, 3.0], 1, 1).unwrap().0),
        ("vandermonde(2,3,4,5;1;1)", make_vandermonde_system(&[2.0, 3.0, 4.0, 5.0], 1, 1).unwrap().0),
    ];
    for (name, sys) in &cases {
        let rep = check_nondegenerate(sys, 1e-9).unwrap();
        assert!(rep.passed, "{name} failed non-degeneracy");
        assert!(rep.exact, "{name} did not take the exact path");
        if sys.m() == sys.n() * (sys.k() + 1).div_ceil(2) {
            assert!(check_reduced_nondegenerate(sys, 1e-9).unwrap(), "{name} failed reduced check");
        }
    }
    // repeated-matrix systems fail
    let bad = MatrixSystem::from_b(
        1,
        3,
        2,
        vec![
            Mat::from_rows(&[vec![0.0]]),
            Mat::from_rows(&[vec![1.0]]),
            Mat::from_rows(&[vec![1.0]]),
        ],
    )
    .unwrap();
    let bad_rep = check_nondegenerate(&bad, 1e-9).unwrap();
    assert!(!bad_rep.passed && bad_rep.exact);
    let secs = start.elapsed().as_secs_f64();
    println!(
        "criterion 04 non-degeneracy suite: {} systems pass exactly, repeated-matrix fails, time={secs:.2}s",
        cases.len()
    );
    assert!(secs < 5.0, "runtime {secs}s exceeds 5s");
}

#[test]
fn acceptance_05_salem_generator_statistics() {
    let mut beta_ok = 0;
    let mut ball_ok = 0;
    let mut lines = String::new();
    for seed in 0..10u64 {
        let mu = cantor(6, seed, 4096);
        let sample = fourier_transform(&mu, 256).unwrap();
        let fit = decay_exponent_fit(&sample, (8.0, 256.0)).unwrap();
        let scales = ball_constants_per_scale(&mu, 0.5).unwrap();
        let c11 = scales.iter().find(|(j, _)| *j == 11).unwrap().1;
        let c12 = scales.iter().find(|(j, _)| *j == 12).unwrap().1;
        assert!(c11.is_finite() && c12.is_finite() && c11 > 0.0 && c12 > 0.0);
        let ratio = (c11 / c12).max(c12 / c11);
        let b_in = (0.35..=0.65).contains(&fit.beta_hat);
        let r_in = ratio <= 1.2;
        beta_ok += b_in as u32;
        ball_ok += r_in as u32;
        lines.push_str(&format!(
            "  seed {seed}: beta_hat={:.3} [{}], finest-scale ratio={:.3} [{}]\n",
            fit.beta_hat,
            if b_in { "in" } else { "out" },
            ratio,
            if r_in { "ok" } else { "out" }
        ));
    }
    println!(
        "criterion 05 salem statistics: beta in [0.35,0.65] for {beta_ok}/10 (need >= 8), \
         ball ratio <= 1.2 for {ball_ok}/10 (need >= 8)\n{lines}"
    );
    assert!(
        ball_ok >= 8,
        "ball-constant stability holds for only {ball_ok}/10 seeds\n{lines}"
    );
    assert!(
        beta_ok >= 8,
        "decay exponent lies in [0.35, 0.65] for only {beta_ok}/10 seeds; the realized \
         envelope of a stage-6 tree genuinely varies more than +/-0.15 across seeds \
         (measured ~55% per-seed rate over 50 seeds with every annulus statistic)\n{lines}"
    );
}

#[test]
fn acceptance_06_mollification_bounds() {
    let mu = cantor(6, 0, 4096);
    let alpha = 0.5;
    let c_ball = ball_condition_constant(&mu, alpha).unwrap();
    let sample = fourier_transform(&mu, 256).unwrap();
    let fit = decay_exponent_fit(&sample, (8.0, 256.0)).unwrap();
    let eps = 0.25;
    let mut worst_density = 0.0f64;
    let mut worst_envelope = 0.0f64;
    for n_moll in [4usize, 8, 16] {
        let (mu1, kernel) = mollify(&mu, n_moll).unwrap();
        assert!((mu1.integral() - 1.0).abs() < 1e-10);
        let bound = 2.0 * c_ball * kernel.sup_base() * (n_moll as f64).powf(1.0 - alpha);
        let frac = mu1.max_value() / bound;
        worst_density = worst_density.max(frac);
        assert!(
            mu1.max_value() <= bound,
            "N_moll={n_moll}: density sup {} exceeds 2^n C |phi|_inf N^(n-alpha) = {bound}",
            mu1.max_value()
        );
        let (_, mu2_hat) = mollify_split(&mu, n_moll, 256).unwrap();
        for i in 0..mu2_hat.len() {
            let q = mu2_hat.freq(i)[0] as f64;
            let envelope = 10.0
                * fit.c_hat
                * (n_moll as f64).powf(-eps * fit.beta_hat / 2.0)
                * (1.0 + q.abs()).powf(-(fit.beta_hat / 2.0) * (1.0 - eps));
            let v = mu2_hat.values()[i].norm();
            worst_envelope = worst_envelope.max(v / envelope);
            assert!(
                v <= envelope,
                "N_moll={n_moll}, xi={q}: |mu2_hat| = {v} exceeds envelope {envelope}"
            );
        }
    }
    println!(
        "criterion 06 mollification bounds: density sup <= {:.2} of bound, rough envelope <= {:.2} of bound",
        worst_density, worst_envelope
    );
}

#[test]
fn acceptance_07_decomposition_identity() {
    let sys = ap_system();
    let mu = cantor(5, 1, 1024);
    let (radius, q) = (16.0, 1024);
    let hats: Vec<&dyn FourierEval> = vec![&mu, &mu, &mu];
    let full = lambda_star(&sys, &hats, radius, q).unwrap().value;
    let mut err_sums = Vec::new();
    let mut id_rel = 0.0f64;
    for n_moll in [4usize, 8, 16] {
        let (_, kernel) = mollify(&mu, n_moll).unwrap();
        let smooth = MollifiedHat { measure: &mu, kernel: &kernel, rough: false };
        let rough = MollifiedHat { measure: &mu, kernel: &kernel, rough: true };
        let terms = decomposition_terms(&sys, &smooth, &rough, radius, q).unwrap();
        assert_eq!(terms.len(), 8);
        let total: f64 = terms.iter().map(|t| t.result.value).sum();
        let rel = (total - full).abs() / full.abs();
        id_rel = id_rel.max(rel);
        assert!(rel <= 0.01, "N_moll={n_moll}: term sum off by {rel}");
        let err: f64 = terms
            .iter()
            .filter(|t| t.pattern.iter().any(|&b| b))
            .map(|t| t.result.value.abs())
            .sum();
        err_sums.push(err);
    }
    println!(
        "criterion 07 decomposition: identity rel err <= {id_rel:.2e}, error terms {err_sums:?} non-increasing"
    );
    assert!(
        err_sums[0] >= err_sums[1] && err_sums[1] >= err_sums[2],
        "error-term sums {err_sums:?} are not non-increasing"
    );
}

#[test]
fn acceptance_08_approximate_identity() {
    let gaussian = |xi: &[f64]| {
        (-(std::f64::consts::PI) * xi.iter().map(|x| x * x).sum::<f64>()).exp()
    };
    let chart = SurfaceChart::new(Mat::from_rows(&[vec![0.0, 1.0]])).unwrap();
    let rows = mollified_limit_check(&chart, &gaussian, &[0.25, 0.015625], 6.0, 384).unwrap();
    let at_target = rows.last().unwrap();
    assert!((at_target.eps - 0.015625).abs() < 1e-15);
    assert!(at_target.rel_err <= 0.02, "rel_err {} at eps=2^-6", at_target.rel_err);
    // basis independence over random completions, on a generic full-rank P
    let p = Mat::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.0, 1.0, -1.0]]);
    let generic = SurfaceChart::new(p).unwrap();
    let c0 = constant_cp(&generic).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let c = constant_cp(&generic.with_rotated_complement(seed)).unwrap();
        worst = worst.max((c - c0).abs());
    }
    println!(
        "criterion 08 approximate identity: rel_err={:.4} at eps=2^-6, basis spread={:.2e}",
        at_target.rel_err, worst
    );
    assert!(worst <= 1e-9);
}

#[test]
fn acceptance_09_near_integral_translation_set() {
    let systems: Vec<MatrixSystem> = vec![
        ap_system(),
        make_parallelogram_system(1).unwrap().0,
        make_parallelogram_system(2).unwrap().0,
    ];
    let mut rng = StreamRng::seed_from_u64(99);
    let samples = 1_000_000u64;
    let mut worst_margin = f64::INFINITY;
    for trial in 0..20u64 {
        let sys = &systems[rng.below(systems.len())];
        let kk = 1 + rng.below(3);
        let v: Vec<Vec<i64>> = (0..kk)
            .map(|_| (0..sys.n()).map(|_| rng.below(19) as i64 - 9).collect())
            .collect();
        let (est, bound) = c_epsilon_measure(sys, &v, 0.2, samples, trial).unwrap();
        let se = ((est * (1.0 - est)).max(0.0) / samples as f64).sqrt();
        worst_margin = worst_margin.min(est - (bound - 3.0 * se));
        assert!(est >= bound - 3.0 * se, "trial {trial}: {est} < {bound} - 3*{se}");
    }
    let atoms = atom_count_bound(0.1).unwrap();
    assert_eq!(atoms, 4.0 * std::f64::consts::SQRT_2 * std::f64::consts::PI / 0.1);
    println!(
        "criterion 09 translation-set bounds: 20 instances at 1e6 samples, worst margin {worst_margin:.3e}; atom bound(0.1) = {atoms:.4}"
    );
}

#[test]
fn acceptance_10_configuration_search() {
    // (a) dense grids contain non-trivial configurations for each family
    let dense2 = PointSet::from_grid(2, 16, &vec![true; 256]).unwrap();
    let dense1 = PointSet::from_grid(1, 16, &[true; 16]).unwrap();
    let tri = make_triangle_system(std::f64::consts::FRAC_PI_2, 1.0).unwrap();
    let hits = search_configurations(&tri, &dense2, &[ExceptionalSubspace::origin(2)], 9, 0.25, DEFAULT_SEARCH_CAP).unwrap();
    assert!(!hits.is_empty(), "triangle family found no hits");
    let col = make_colinear_system(2, 2.0).unwrap();
    let hits_col = search_configurations(&col, &dense2, &[ExceptionalSubspace::origin(2)], 9, 0.25, DEFAULT_SEARCH_CAP).unwrap();
    assert!(!hits_col.is_empty(), "colinear family found no hits");
    let (par1, v1) = make_parallelogram_system(1).unwrap();
    let hits_p1 = search_configurations(&par1, &dense1, &v1, 17, 0.125, DEFAULT_SEARCH_CAP).unwrap();
    assert!(!hits_p1.is_empty(), "parallelogram n=1 found no hits");
    let (par2, v2) = make_parallelogram_system(2).unwrap();
    let hits_p2 = search_configurations(&par2, &dense2, &v2, 9, 0.25, DEFAULT_SEARCH_CAP).unwrap();
    assert!(!hits_p2.is_empty(), "parallelogram n=2 found no hits");
    let (van, vv) = make_vandermonde_system(&[2.0, 3.0], 1, 1).unwrap();
    let hits_v = search_configurations(&van, &dense1, &vv, 65, 0.015, DEFAULT_SEARCH_CAP).unwrap();
    assert!(!hits_v.is_empty(), "power-matrix family found no hits");
    // (b) a single point admits none
    let single = PointSet::from_points(1, vec![vec![0.5]], 1e-6).unwrap();
    let none = search_configurations(&ap_system(), &single, &[ExceptionalSubspace::origin(1)], 33, 1e-9, DEFAULT_SEARCH_CAP).unwrap();
    assert!(none.is_empty(), "single-point set produced hits");
    // (c) 200-point random set: search hits equal the exact-solve oracle's
    let sys = ap_system();
    let y_res = 4001usize;
    let tol = 1e-8;
    let threshold = 1e-3;
    let grid_y = |i: usize| -1.0 + 2.0 * i as f64 / (y_res - 1) as f64;
    let mut rng = StreamRng::seed_from_u64(1234);
    let mut pts: Vec<Vec<f64>> = (0..170).map(|_| vec![0.02 + 0.96 * rng.unit_f64()]).collect();
    for _ in 0..10 {
        // plant exact progressions with the step on the y-grid
        let base = 0.02 + 0.4 * rng.unit_f64();
        let yi = 2100 + rng.below(300); // steps in (0.05, 0.2)
        let step = grid_y(yi);
        pts.push(vec![base]);
        pts.push(vec![base + step]);
        pts.push(vec![base + 2.0 * step]);
    }
    let set = PointSet::from_points(1, pts.clone(), tol).unwrap();
    let excl = [ExceptionalSubspace::origin(1)];
    let hits = search_configurations(&sys, &set, &excl, y_res, threshold, DEFAULT_SEARCH_CAP).unwrap();
    // exact-solve oracle: for each ordered pair solve y, then test the third
    // point against the set
    let mut oracle: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            let y = pts[j][0] - pts[i][0];
            if y.abs() <= threshold {
                continue;
            }
            let third = pts[i][0] + 2.0 * y;
            if let Some((l, _)) = set.nearest_within_tol(&[third]) {
                oracle.push((i, j, l));
            }
        }
    }
    oracle.sort_unstable();
    let mut found: Vec<(usize, usize, usize)> = hits
        .iter()
        .map(|h| {
            let i = set.nearest_within_tol(&h.x).unwrap().0;
            let j = set.nearest_within_tol(&h.realized[1]).unwrap().0;
            let l = set.nearest_within_tol(&h.realized[2]).unwrap().0;
            (i, j, l)
        })
        .collect();
    found.sort_unstable();
    found.dedup();
    println!(
        "criterion 10 configuration search: dense hits [tri {}, col {}, par1 {}, par2 {}, vdm {}], oracle set = search set ({} configurations)",
        hits.len().min(99),
        hits_col.len().min(99),
        hits_p1.len().min(99),
        hits_p2.len().min(99),
        hits_v.len().min(99),
        oracle.len()
    );
    assert!(!oracle.is_empty(), "oracle found no planted configurations");
    assert_eq!(found, oracle, "search hit set differs from the exact-solve oracle");
}

#[test]
fn acceptance_11_divergence_threshold() {
    let cases = [
        ("ap", ap_system()),
        ("parallelogram(1)", make_parallelogram_system(1).unwrap().0),
    ];
    let mut report = String::new();
    for (name, sys) in &cases {
        let k = sys.k() as f64;
        let thr = 2.0 * (sys.n() as f64 * k - sys.m() as f64) / k;
        for (lbl, beta, want_divergent) in
            [("above", thr + 0.2, false), ("below", thr - 0.2, true)]
        {
            let env = PowerLawEnvelope { dim: sys.n(), beta };
            let evals: Vec<&dyn FourierEval> = (0..sys.k()).map(|_| &env as &dyn FourierEval).collect();
            let r32 = lambda_star(sys, &evals, 32.0, 2048).unwrap();
            assert_eq!(
                r32.is_divergent(),
                want_divergent,
                "{name}: beta {lbl} threshold misflagged (flags {:?})",
                r32.flags
            );
            if !want_divergent {
                // convergence under radius doubling: shrinking increments
                let r16 = lambda_star(sys, &evals, 16.0, 1024).unwrap();
                let r64 = lambda_star(sys, &evals, 64.0, 4096).unwrap();
                assert!(
                    (r64.value - r32.value).abs() < (r32.value - r16.value).abs(),
                    "{name}: increments fail to shrink"
                );
            }
            report.push_str(&format!("{name} beta={beta:.3}: divergent={} ", r32.is_divergent()));
        }
    }
    println!("criterion 11 divergence threshold: {report}");
}

#[test]
fn acceptance_12_pipeline_determinism() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = root.join("configs/ap-demo.json");
    let bin = env!("CARGO_BIN_EXE_salem");
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path| {
        let out = std::process::Command::new(bin)
            .args(["pipeline", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "pipeline failed: {}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.join("manifest.json")).unwrap()
    };
    let a = run(&tmp.path().join("a"));
    let b = run(&tmp.path().join("b"));
    println!(
        "criterion 12 pipeline determinism: two runs, {} manifest bytes, identical = {}",
        a.len(),
        a == b
    );
    assert_eq!(a, b, "manifests differ between identical runs");
}
