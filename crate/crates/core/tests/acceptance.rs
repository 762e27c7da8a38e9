//! Acceptance checks. Run with `cargo test --test acceptance`; prints one
//! line per criterion and exits nonzero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use modlab::datagen;
use modlab::estimates::{
    bilinear_ratio, decoupling_ratio, fit_exponent, sdec, smoothing_ratio, BilinearConfig, DataFamily,
    DecouplingConfig, ExperimentConfig, ProfileKind,
};
use modlab::grid;
use modlab::modspace::{self, ModNormSpec};
use modlab::propagator::{self, Sign};
use modlab::solver::{self, LargeDataOptions, NLSProblem, PicardOptions};
use modlab::variation::{self, SampledPath, ValueNorm};
use modlab::{Field, Grid, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String)>;

fn random_field(g: Grid, rng: &mut ChaCha8Rng) -> Field {
    let v = (0..g.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    Field::new(g, v).unwrap()
}

fn plancherel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = ModNormSpec::new(0.0, 2.0, 2.0)?;
    let mut worst = 0.0f64;
    for (d, n) in [(1, 128), (2, 32), (3, 16)] {
        let g = Grid::new(d, n, 8.0 * PI)?;
        let w = modspace::make_window(&g)?;
        for _ in 0..100 {
            let f = random_field(g, &mut rng);
            let l2 = grid::lp_norm(&f, 2.0)?;
            let m = modspace::modulation_norm(&f, &spec, &w)?;
            worst = worst.max((m - l2).abs() / l2);
        }
    }
    Ok((worst <= 1e-10, format!("max relative error {worst:.2e} over 300 fields")))
}

fn sdec_table() -> Outcome {
    let table = [((6.0, 1), 0.0), ((8.0, 1), 1.0 / 16.0), ((4.0, 3), 1.0 / 8.0), ((4.0, 2), 0.0)];
    let mut ok = true;
    let mut got = Vec::new();
    for ((p, d), want) in table {
        let v = sdec(p, d)?;
        ok &= v == want;
        got.push(format!("({p},{d})->{v}"));
    }
    Ok((ok, got.join(" ")))
}

fn smoothing() -> Outcome {
    let cfg = ExperimentConfig {
        d: 1,
        n: 16384,
        length: 256.0,
        scales: vec![4.0, 8.0, 16.0, 32.0],
        family: DataFamily::Focusing,
        seed: 0,
        p: 8.0,
        s: 0.0,
        q: 2.0,
        horizon: 1.0,
        nodes: 2001,
        grading: 3.0,
        margin: Some(0.15),
    };
    let r = smoothing_ratio(&cfg)?;
    let target = 2.0 / 16.0;
    let ok = (r.slope - target).abs() <= 0.15;
    Ok((ok, format!("slope {:.4}, target {target} +- 0.15", r.slope)))
}

fn bilinear() -> Outcome {
    let cfg = BilinearConfig {
        d: 3,
        n: 32,
        length: 8.0 * PI,
        high_sweep: vec![1.0, 2.0, 4.0],
        low_fixed: 1.0,
        low_sweep: vec![1.0, 2.0, 4.0],
        high_fixed: 4.0,
        family: DataFamily::RandomPhase,
        seed: 0,
        horizon: 1.0,
        nodes: 513,
        grading: 1.0,
        min_separation: 1.0,
        chain: false,
        margin: None,
    };
    let r = bilinear_ratio(&cfg)?;
    let ok = r.low.slope <= 0.5 + 0.15 && r.high.slope <= 0.15;
    Ok((ok, format!("N2-slope {:.4} (<= 0.65), N1-slope {:.4} (<= 0.15)", r.low.slope, r.high.slope)))
}

fn decoupling() -> Outcome {
    let cfg = DecouplingConfig {
        d: 1,
        p: 6.0,
        radii: vec![16.0, 64.0, 256.0],
        profile: ProfileKind::Constant,
        h_max: 0.5,
        period_factor: 8.0,
        margin: None,
    };
    let r = decoupling_ratio(&cfg)?;
    Ok((r.slope <= 0.2, format!("slope {:.4} (<= 0.2)", r.slope)))
}

fn vp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = Grid::new(1, 16, 4.0)?;
    let mut mismatches = 0;
    for _ in 0..500 {
        // with the virtual terminal node the exhaustive search sees m + 1 <= 12 nodes
        let m = rng.gen_range(2..=11);
        let p = [1.0, 1.5, 2.0, 3.0, 4.0][rng.gen_range(0..5)];
        let times = (0..m).map(|j| j as f64 * 0.25).collect();
        let values = (0..m).map(|_| random_field(g, &mut rng)).collect();
        let path = SampledPath::new(times, values, ValueNorm::L2)?;
        if variation::vp_norm(&path, p)? != variation::vp_norm_brute(&path, p)? {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches on 500 paths")))
}

fn duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = Grid::new(1, 16, 4.0)?;
    let mut worst = 0.0f64;
    for p in [2.0, 4.0] {
        let pd = ModNormSpec::dual_exponent(p);
        for i in 0..100 {
            let k = rng.gen_range(1..6);
            let partition: Vec<f64> = (0..=k).map(|j| j as f64).collect();
            let pieces = (0..k).map(|_| random_field(g, &mut rng)).collect();
            let atom = variation::make_atom(partition.clone(), pieces, p, &ValueNorm::L2)?;
            // every other pair uses the near-extremal dual path
            let v = if i % 2 == 0 {
                let values = (0..=k).map(|_| random_field(g, &mut rng)).collect();
                SampledPath::new(partition, values, ValueNorm::L2)?
            } else {
                variation::dual_witness(&atom, p)?
            };
            let b = variation::duality_pairing(&atom, &v)?.norm();
            worst = worst.max(b / variation::vp_norm(&v, pd)?);
        }
    }
    Ok((worst <= 1.0001, format!("max |B| / ||v||_V^p' = {worst:.6} on 200 pairs")))
}

fn small_data() -> Outcome {
    let g = Grid::new(1, 256, 16.0 * PI)?;
    let u0 = datagen::gaussian(&g, 0.5, 1.0)?;
    let p = NLSProblem::standard(u0, Sign::Defocusing, 0.1, 129)?;
    let opts = PicardOptions::for_problem(&p);
    let (_, report) = solver::picard_solve(&p, &opts)?;
    let max_factor = report.factors.iter().cloned().fold(0.0, f64::max);
    let cv = solver::cross_validate(&p, &opts, 1e-5)?;
    let ok = !report.factors.is_empty() && max_factor < 0.5 && cv.distance <= 1e-5;
    Ok((ok, format!("max factor {max_factor:.2e} over {} iterates, cross-validation {:.2e}", report.iterates, cv.distance)))
}

fn large_data() -> Outcome {
    let g = Grid::new(3, 16, 8.0 * PI)?;
    let w = modspace::make_window(&g)?;
    let (u0, _) = datagen::mollified_indicator(4.0, &g, &w, datagen::DEFAULT_EPS)?;
    let p = NLSProblem::standard(u0, Sign::Defocusing, 1.0, 16)?;
    let (_, report) = solver::large_data_protocol(&p, &LargeDataOptions::default())?;
    let cert = report.certificate.expect("protocol attaches a certificate");
    let ok = !cert.checks.is_empty()
        && cert.checks.iter().all(|c| c.norm <= 2.0 * cert.a && c.tail <= 2.0 * cert.delta);
    let worst = cert.checks.iter().map(|c| c.norm).fold(0.0, f64::max);
    Ok((
        ok,
        format!(
            "A {:.4}, delta {:.4}, N {}, T {:.2e}, {} iterates, max norm {:.4}",
            cert.a,
            cert.delta,
            cert.cutoff,
            cert.horizon,
            cert.checks.len(),
            worst
        ),
    ))
}

fn infinite_energy() -> Outcome {
    let g = Grid::new(1, 2048, 64.0 * PI)?;
    let w = modspace::make_window(&g)?;
    let radii = [2.0, 4.0, 8.0, 16.0];
    let mut m = Vec::new();
    let mut h1 = Vec::new();
    for &n in &radii {
        let (_, r) = datagen::mollified_indicator(n, &g, &w, 0.1)?;
        m.push(r.modulation);
        h1.push(r.h1);
    }
    let spread = m.iter().cloned().fold(0.0, f64::max) / m.iter().cloned().fold(f64::INFINITY, f64::min);
    let slope = fit_exponent(&radii, &h1)?.slope;
    let ok = spread <= 2.0 && (slope - 0.25).abs() <= 0.1;
    Ok((ok, format!("M spread {spread:.3} (<= 2), H1 exponent {slope:.4} (0.25 +- 0.1)")))
}

fn conservation() -> Outcome {
    let mut mass_drift = 0.0f64;
    let cases: [(usize, usize, f64, f64, Sign); 4] = [
        (1, 256, 16.0 * PI, 0.5, Sign::Defocusing),
        (1, 256, 16.0 * PI, 0.5, Sign::Focusing),
        (2, 64, 16.0 * PI, 0.5, Sign::Focusing),
        (3, 16, 8.0 * PI, 0.5, Sign::Defocusing),
    ];
    for (d, n, length, amplitude, sign) in cases {
        let g = Grid::new(d, n, length)?;
        let u0 = datagen::gaussian(&g, amplitude, 1.0)?;
        let p = NLSProblem::standard(u0, sign, 0.1, 65)?;
        let sol = solver::splitstep_solve(&p, 0.1 / 128.0)?;
        let m0 = propagator::mass(&p.u0);
        for f in &sol.path {
            mass_drift = mass_drift.max((propagator::mass(f) - m0).abs() / m0);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut unitarity = 0.0f64;
    for (d, n) in [(1, 256), (2, 32), (3, 16)] {
        let g = Grid::new(d, n, 8.0 * PI)?;
        let f = random_field(g, &mut rng);
        let l2 = grid::lp_norm(&f, 2.0)?;
        for t in [0.01, 0.3, 1.0, 7.5] {
            unitarity = unitarity.max((grid::lp_norm(&propagator::free_evolve(&f, t), 2.0)? - l2).abs() / l2);
        }
    }

    // each step moves the transformed solution by one grid cell
    let mut galilean = 0.0f64;
    let g = Grid::new(1, 512, 16.0 * PI)?;
    let p = NLSProblem::standard(datagen::gaussian(&g, 1.0, 1.0)?, Sign::Focusing, PI / 4.0, 65)?;
    galilean = galilean.max(solver::galilean_defect(&p, &[4.0], PI / 256.0)?);
    let g = Grid::new(2, 128, 16.0 * PI)?;
    let p = NLSProblem::standard(datagen::gaussian(&g, 0.3, 2.0)?, Sign::Defocusing, 2.0 * PI, 65)?;
    galilean = galilean.max(solver::galilean_defect(&p, &[2.0, 0.0], PI / 32.0)?);

    let ok = mass_drift <= 1e-10 && unitarity <= 1e-10 && galilean <= 1e-10;
    Ok((ok, format!("mass drift {mass_drift:.2e}, unitarity {unitarity:.2e}, Galilean {galilean:.2e}")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("plancherel", plancherel),
        ("sdec-table", sdec_table),
        ("smoothing-exponent", smoothing),
        ("bilinear-refinement", bilinear),
        ("decoupling", decoupling),
        ("vp-dp-oracle", vp_oracle),
        ("duality-inequality", duality),
        ("small-data-contraction", small_data),
        ("large-data-certificate", large_data),
        ("infinite-energy-family", infinite_energy),
        ("conservation", conservation),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name}: {detail} [{:.1}s]", i + 1, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
