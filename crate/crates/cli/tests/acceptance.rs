//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use odmr_cli::RunConfig;
use odmr_core::fitting::{
    detect_and_fit, extract_branches, fit_branch_model, fit_lorentzians, BranchFitSettings, DetectSettings, Dip,
    FitSettings, LorentzianModel,
};
use odmr_core::hamiltonian::{build_full_hamiltonian, effective_params, eigen_basis};
use odmr_core::oracle::{integrate_to_steady_with, OracleOptions};
use odmr_core::params::{default_constants, DriveParams, FrequencyGrid, NVParams};
use odmr_core::response::{response, steady_amplitudes, ModelOptions, TwoModeModel};
use odmr_core::sensitivity::{protocol_mw_frequency, NoiseModel};
use odmr_core::{spectrum_1d, spectrum_2d};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_nv-odmr")
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    run_cli_in(Path::new("."), args)
}

fn run_cli_in(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(bin()).current_dir(dir).args(args).output().map_err(err)?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(out.stdout)
}

fn distance_to(branches: &[f64; 4], x: f64) -> f64 {
    branches.iter().map(|b| (b - x).abs()).fold(f64::INFINITY, f64::min)
}

fn bandwidth_at_default_settings() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let t0 = Instant::now();
    let stdout = run_cli(&["sensitivity", "--summary-only", "--out", tmp.path().to_str().unwrap()])?;
    let elapsed = t0.elapsed().as_secs_f64();
    let r: Value = serde_json::from_slice(&stdout).map_err(err)?;
    let bw = r["bandwidth_hz"].as_f64().ok_or("no bandwidth")?;
    let center = r["center_hz"].as_f64().ok_or("no center")?;
    check(
        (4.6e6..=5.7e6).contains(&bw) && (center - 9.9e6).abs() <= 50e3 && elapsed < 5.0,
        format!("bandwidth {:.4} MHz, center {:.4} MHz, {elapsed:.2} s", bw / 1e6, center / 1e6),
    )
}

fn anticrossing_map_and_fit() -> Outcome {
    let cfg = RunConfig::load(&repo().join("configs/anticrossing.toml")).map_err(err)?;
    let nv = cfg.nv_params();
    let mw = cfg.grids.mw.grid().map_err(err)?;
    let ac = cfg.grids.ac.grid().map_err(err)?;
    let map = spectrum_2d(&nv, &cfg.drive_params(), &mw, &ac, &cfg.model_options()).map_err(err)?;
    let verify = odmr_cli::commands::verify_map(&map, &cfg).map_err(err)?;

    let rabi = nv.gamma_e * cfg.drive.b_ac.0;
    let set = extract_branches(&map, &cfg.extract_settings(0.0)).map_err(err)?;
    let branches = odmr_core::resonance_branches(&nv, rabi, &ac.points(), cfg.model.use_effective).map_err(err)?;
    let step = mw.step();
    let rows_ok = set
        .rows
        .iter()
        .zip(&branches)
        .filter(|(row, b)| !row.centers.is_empty() && row.centers.iter().all(|c| distance_to(b, c.center) <= step))
        .count();
    let extracted = rows_ok as f64 / set.rows.len() as f64;

    let fit = fit_branch_model(&set, &BranchFitSettings::default()).map_err(err)?;
    let eff = effective_params(&nv).map_err(err)?;
    let (d0, ex0) = if cfg.model.use_effective { (eff.d, eff.ex) } else { (nv.d, nv.ex) };
    let ok = verify.fraction >= 0.95
        && extracted >= 0.95
        && (fit.d - d0).abs() <= 10e3
        && (fit.ex - ex0).abs() <= 0.01 * ex0
        && (fit.rabi - rabi).abs() <= 0.05 * rabi;
    check(
        ok,
        format!(
            "minima on branches {:.1}%, fitted centers on branches {:.1}%, D off {:.0} Hz, Ex off {:.3}%, gammaB off {:.3}%",
            100.0 * verify.fraction,
            100.0 * extracted,
            fit.d - d0,
            100.0 * (fit.ex / ex0 - 1.0),
            100.0 * (fit.rabi / rabi - 1.0)
        ),
    )
}

fn autler_townes_splitting() -> Outcome {
    let nv = default_constants().with_decay(0.2e6);
    let grid = FrequencyGrid::centered(nv.d + nv.ex, 3e6, 601).map_err(err)?;
    let opts = ModelOptions { use_effective: false, dark_probe: None };
    let mut worst = 0.0_f64;
    for k in 0..=6 {
        let rabi = 0.5e6 + 0.25e6 * k as f64;
        let drive = DriveParams::new(2.0 * 0.02e6 / nv.gamma_e, nv.d, rabi / nv.gamma_e, 2.0 * nv.ex);
        let s = spectrum_1d(&nv, &drive, &grid, &opts).map_err(err)?;
        let fit = detect_and_fit(&grid.points(), s.values(), 0.0, &DetectSettings::default(), &FitSettings::default())
            .map_err(err)?
            .ok_or("no dips")?;
        if fit.model.dips.len() != 2 {
            return Err(format!("gammaB {rabi}: {} dips", fit.model.dips.len()));
        }
        let split = fit.model.dips[1].center - fit.model.dips[0].center;
        worst = worst.max((split / rabi - 1.0).abs());
    }
    check(worst <= 0.01, format!("worst relative error {worst:.2e} over gammaB 0.5..2 MHz"))
}

fn quadratic_weak_field_response() -> Outcome {
    let nv = default_constants();
    let eff = effective_params(&nv).map_err(err)?;
    let omega_ac = 2.0 * eff.ex;
    let drive = DriveParams::new(
        2.0 * 0.2e6 / nv.gamma_e,
        protocol_mw_frequency(&nv, omega_ac, true).map_err(err)?,
        0.0,
        omega_ac,
    );
    let opts = ModelOptions::default();
    let p0 = |b: f64| -> Result<f64, String> {
        let mut d = drive;
        d.b_ac[2] = b;
        Ok(response(&nv, &d, &opts).map_err(err)?.p0)
    };
    let base = p0(0.0)?;
    let top = 0.2 * nv.gamma_b / nv.gamma_e;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..=20 {
        let b = top * 10f64.powf(-1.0 + k as f64 / 20.0);
        xs.push(b.ln());
        ys.push((p0(b)? - base).abs().ln());
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    check((slope - 2.0).abs() <= 0.02, format!("log-log slope {slope:.4}"))
}

fn oracle_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240607);
    let (mut worst, mut worst_residual) = (0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let m = TwoModeModel {
            omega_b: rng.random_range(-8e6..8e6),
            omega_d: rng.random_range(-8e6..8e6),
            j: rng.random_range(0.0..3e6),
            lambda_b: rng.random_range(0.01e6..0.5e6),
            gamma_b: rng.random_range(0.5e6..3e6),
            gamma_d: rng.random_range(0.5e6..3e6),
        };
        let exact = steady_amplitudes(&m).map_err(err)?;
        let opts = OracleOptions {
            t_max: 400.0 / m.gamma_b.min(m.gamma_d),
            tol: 1e-12,
            rtol: 1e-12,
        };
        let ode = integrate_to_steady_with(&m, &opts).map_err(err)?;
        let scale = (exact.b.norm_sqr() + exact.d.norm_sqr()).sqrt();
        worst = worst.max(((ode.b - exact.b).norm_sqr() + (ode.d - exact.d).norm_sqr()).sqrt() / scale);
        let (db, dd) = m.rhs(exact.b, exact.d);
        worst_residual = worst_residual.max((db.norm_sqr() + dd.norm_sqr()).sqrt() / m.lambda_b);
    }
    check(
        worst <= 1e-9 && worst_residual < 1e-12,
        format!("100 sets: worst deviation {worst:.2e}, worst residual {worst_residual:.2e} lambda"),
    )
}

fn perturbative_consistency() -> Outcome {
    let mut worst = 0.0_f64;
    for bx in [0.5e-3, 1e-3, 2e-3] {
        let p = NVParams { bx, ..default_constants() };
        let basis = eigen_basis(&build_full_hamiltonian(&p).map_err(err)?).map_err(err)?;
        let eff = effective_params(&p).map_err(err)?;
        worst = worst.max((basis.bright_dark_splitting() - 2.0 * eff.ex).abs());
    }
    check(worst < 1e3, format!("worst splitting deviation {worst:.1} Hz at Bx 0.5, 1, 2 mT"))
}

fn fitting_recovery() -> Outcome {
    let (d, ex) = (2.87e9, 4.95e6);
    let axis = |a: f64, b: f64, n: usize| -> Vec<f64> { (0..n).map(|i| a + i as f64 * (b - a) / (n - 1) as f64).collect() };

    let truth = LorentzianModel {
        baseline: 1.0,
        dips: vec![
            Dip { center: d - 3.1e6, hwhm: 0.8e6, depth: 0.012 },
            Dip { center: d + 2.4e6, hwhm: 1.1e6, depth: 0.007 },
        ],
    };
    let x = axis(d - 12e6, d + 12e6, 481);
    let y: Vec<f64> = x.iter().map(|&v| truth.eval(v)).collect();
    let mut init = truth.clone();
    for dip in &mut init.dips {
        dip.center += 0.2 * dip.hwhm;
        dip.hwhm *= 1.3;
        dip.depth *= 0.7;
    }
    let fit = fit_lorentzians(&x, &y, &init, &FitSettings::default()).map_err(err)?;
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    let mut worst = rel(fit.model.baseline, truth.baseline);
    for (f, t) in fit.model.dips.iter().zip(&truth.dips) {
        worst = worst.max(rel(f.center, t.center)).max(rel(f.hwhm, t.hwhm)).max(rel(f.depth, t.depth));
    }

    let (hwhm, depth) = (2e6, 0.01);
    let single = LorentzianModel { baseline: 1.0, dips: vec![Dip { center: d + ex, hwhm, depth }] };
    let x = axis(d + ex - 10e6, d + ex + 10e6, 500);
    let clean: Vec<f64> = x.iter().map(|&v| single.eval(v)).collect();
    let sigma = 0.1 * depth;
    let noise = Normal::new(0.0, sigma).map_err(err)?;
    let mut good = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let y: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
        if let Ok(Some(f)) = detect_and_fit(&x, &y, sigma, &DetectSettings::default(), &FitSettings::default()) {
            let main = f.model.dips.iter().max_by(|a, b| a.depth.total_cmp(&b.depth));
            if f.converged && main.is_some_and(|m| (m.center - (d + ex)).abs() < hwhm / 10.0) {
                good += 1;
            }
        }
    }
    check(
        fit.converged && worst <= 1e-6 && good >= 95,
        format!("noise-free worst relative error {worst:.1e}; {good}/100 noisy trials within hwhm/10"),
    )
}

fn reference_sensitivity_fixture() -> Outcome {
    let noise = NoiseModel::ShotLike { sigma0: 4.9e-4, t0: 1.0 };
    let db = noise.field_sensitivity(100.0).map_err(err)?;
    check(
        (db - 4.9e-6).abs() < 1e-18 && noise.unit().symbol() == "T/sqrt(Hz)",
        format!("{:.3} uT/sqrt(Hz)", db * 1e6),
    )
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let entry = entry.map_err(err)?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path()).map_err(err)?);
    }
    Ok(files)
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let root = tmp.path();
    let config = repo().join("configs/anticrossing.toml");
    let config = config.to_str().unwrap();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("spectrum", vec!["spectrum".into(), "--noise".into(), "1e-4".into(), "--seed".into(), "11".into()]),
        ("map", vec!["map".into(), "--config".into(), config.into(), "--verify".into()]),
        ("sensitivity", vec!["sensitivity".into()]),
        ("bandwidth", vec!["bandwidth".into()]),
    ];
    let mut compared = 0;
    for pass in ["a", "b"] {
        // relative paths keep recorded inputs and outputs identical
        let dir = root.join(pass);
        std::fs::create_dir_all(&dir).map_err(err)?;
        for (name, args) in &runs {
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            a.extend(["--out", name]);
            run_cli_in(&dir, &a)?;
        }
        for (input, out) in [
            ("spectrum/spectrum.csv", "fit-spectrum"),
            ("map/map.csv", "fit-map"),
            ("sensitivity/sensitivity.csv", "fit-sensitivity"),
        ] {
            run_cli_in(&dir, &["fit", input, "--out", out])?;
        }
    }
    for dir in std::fs::read_dir(root.join("a")).map_err(err)? {
        let dir = dir.map_err(err)?.file_name();
        let a = snapshot(&root.join("a").join(&dir))?;
        let b = snapshot(&root.join("b").join(&dir))?;
        if a != b {
            return Err(format!("{} differs between runs", dir.to_string_lossy()));
        }
        compared += a.len();
    }
    check(compared >= 15, format!("{compared} output files byte-identical across two runs"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("bandwidth at default settings", bandwidth_at_default_settings),
        ("anticrossing map and branch fit", anticrossing_map_and_fit),
        ("Autler-Townes splitting", autler_townes_splitting),
        ("quadratic weak-field response", quadratic_weak_field_response),
        ("closed form versus time integration", oracle_agreement),
        ("perturbative strain shift", perturbative_consistency),
        ("Lorentzian fit recovery", fitting_recovery),
        ("reference sensitivity figure", reference_sensitivity_fixture),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
