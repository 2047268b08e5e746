//! Subcommand implementations. Every command computes first and writes all
//! of its files at the end from a single thread.

use std::path::{Path, PathBuf};

use odmr_core::fitting::{
    detect_and_fit, extract_branches, fit_branch_model, fitted_branches, median, BranchFitSettings,
};
use odmr_core::params::validate;
use odmr_core::response::ModelOptions;
use odmr_core::sensitivity::{default_working_amplitude, fit_gamma, fit_gamma_curve, sensitivity_sweep, SweepSettings};
use odmr_core::spectrum::{distance_to_branches, resonance_branches, Spectrum};
use odmr_core::{spectrum_1d, spectrum_2d, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::cli::{Cli, Command, GlobalArgs};
use crate::config::{parse_quantity, Dimension, Hertz, RunConfig, Tesla};
use crate::csv::{self, number, spectrum_from_table, spectrum_table, Metadata, Table};
use crate::error::CliError;
use crate::report::{DipFitReport, FitReport, GammaReport, MapReport, SensitivityReport, SpectrumReport, VerifyReport};
use crate::svg::{self, Plot, Series, PALETTE};

/// Share of map rows whose minimum must sit on a branch for `--verify`.
pub const VERIFY_FRACTION: f64 = 0.95;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = resolve(&cli.global)?;
    match &cli.command {
        Command::Spectrum => spectrum(&cfg, &cli.global),
        Command::Map => map(&cfg, &cli.global),
        Command::Fit { input, sigma } => fit(&cfg, &cli.global, input, *sigma),
        Command::Sensitivity { summary_only } => sensitivity(&cfg, &cli.global, *summary_only),
        Command::Bandwidth => sensitivity(&cfg, &cli.global, true),
    }
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &g.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(text) = &g.rf_amp {
        cfg.drive.b_ac = Tesla(match parse_quantity(text, Dimension::Field) {
            Ok(b) => b,
            Err(_) => parse_quantity(text, Dimension::Frequency).map_err(CliError::Config)? / cfg.nv.gamma_e,
        });
    }
    if let Some(text) = &g.rf_freq {
        cfg.drive.omega_ac = Hertz(parse_quantity(text, Dimension::Frequency).map_err(CliError::Config)?);
    }
    if let Some(text) = &g.gamma {
        let v = parse_quantity(text, Dimension::Frequency).map_err(CliError::Config)?;
        cfg.nv.gamma_b = Hertz(v);
        cfg.nv.gamma_d = Hertz(v);
    }
    if g.no_effective {
        cfg.model.use_effective = false;
    }
    if let Some(sigma) = g.noise {
        cfg.simulate.add_noise = sigma;
    }
    cfg.check()?;
    Ok(cfg)
}

struct Bundle {
    dir: PathBuf,
    files: Vec<(&'static str, String)>,
}

impl Bundle {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            dir: cfg.out.clone(),
            files: vec![("config.toml", cfg.to_toml())],
        }
    }

    fn add(&mut self, name: &'static str, content: String) {
        self.files.push((name, content));
    }

    fn json<T: Serialize>(&mut self, name: &'static str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.add(name, text);
    }

    fn write(self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(format!("creating {}", self.dir.display()), e))?;
        for (name, content) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, content).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        }
        let names: Vec<&str> = self.files.iter().map(|(n, _)| *n).collect();
        eprintln!("wrote {} to {}", names.join(", "), self.dir.display());
        Ok(())
    }
}

fn warn_regime(cfg: &RunConfig) -> Result<(), CliError> {
    let report = validate(&cfg.nv_params())?;
    for v in &report.violations {
        eprintln!(
            "warning: regime condition {:?} not met (ratio {:.3e}, required {:.3e})",
            v.condition, v.ratio, v.required
        );
    }
    Ok(())
}

fn header(cfg: &RunConfig, opts: &ModelOptions) -> Metadata {
    let nv = cfg.nv_params();
    let drive = cfg.drive_params();
    let mut m = Metadata::new();
    let mut put = |k: &str, v: f64| {
        m.insert(k.to_string(), number(v));
    };
    put("d_hz", nv.d);
    put("ex_hz", nv.ex);
    put("ey_hz", nv.ey);
    put("bx_t", nv.bx);
    put("gamma_e_hz_per_t", nv.gamma_e);
    put("gamma_b_hz", nv.gamma_b);
    put("gamma_d_hz", nv.gamma_d);
    put("b_mw_t", drive.b_mw[0]);
    put("omega_mw_hz", drive.omega_mw);
    put("b_ac_t", drive.b_ac[2]);
    put("omega_ac_hz", drive.omega_ac);
    put("dark_probe_b_mw_t", opts.dark_probe.unwrap_or(0.0));
    put("noise_sigma", cfg.simulate.add_noise);
    m.insert("use_effective".into(), opts.use_effective.to_string());
    m.insert("seed".into(), cfg.seed.to_string());
    m
}

fn add_noise(values: &mut [f64], sigma: f64, seed: u64) {
    if sigma == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma checked");
    for v in values {
        *v += normal.sample(&mut rng);
    }
}

fn require_valid(s: &Spectrum) -> Result<(), CliError> {
    if s.meta.as_ref().is_some_and(|m| !m.model_valid) {
        let population = 1.0 - s.values().iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(Error::ModelInvalid {
            population,
            limit: odmr_core::response::VALIDITY_LIMIT,
        }
        .into());
    }
    Ok(())
}

fn mhz_from(x: &[f64], origin: f64) -> Vec<f64> {
    x.iter().map(|v| (v - origin) / 1e6).collect()
}

fn spectrum(cfg: &RunConfig, g: &GlobalArgs) -> Result<(), CliError> {
    warn_regime(cfg)?;
    let nv = cfg.nv_params();
    let opts = cfg.model_options();
    let grid = cfg.grids.mw.grid()?;
    let mut s = spectrum_1d(&nv, &cfg.drive_params(), &grid, &opts)?;
    require_valid(&s)?;
    let sigma = cfg.simulate.add_noise;
    add_noise(s.values_mut(), sigma, cfg.seed);

    let x = grid.points();
    let settings = cfg.extract_settings(sigma);
    let dips = detect_and_fit(&x, s.values(), sigma, &settings.detect, &settings.fit)
        .ok()
        .flatten();

    let mut out = Bundle::new(cfg);
    out.add("spectrum.csv", spectrum_table(&s, header(cfg, &opts)).render("nv-odmr spectrum: p0 versus omega_mw [Hz]"));
    out.json(
        "spectrum.json",
        &SpectrumReport {
            points: s.cols(),
            model_valid: true,
            noise_sigma: sigma,
            dips: dips.as_ref().map(DipFitReport::from),
        },
    );
    if !g.no_plot {
        let plot = Plot {
            title: format!("ODMR spectrum, ω_AC = {} MHz", svg_number(cfg.drive.omega_ac.0 / 1e6)),
            xlabel: "ω_mw − D (MHz)".into(),
            ylabel: "p0".into(),
            series: vec![Series::line(mhz_from(&x, nv.d), s.values().to_vec(), PALETTE[0])],
            vlines: dips
                .iter()
                .flat_map(|f| f.model.dips.iter().map(|d| (d.center - nv.d) / 1e6))
                .collect(),
            hlines: Vec::new(),
        };
        out.add("spectrum.svg", plot.render());
    }
    out.write()
}

fn svg_number(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Per-row global minimum against the analytic branches.
pub fn verify_map(map: &Spectrum, cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let nv = cfg.nv_params();
    let mw = map.mw.points();
    let ac = map.ac.points();
    let tolerance = map.mw.step().unwrap_or(0.0);
    let rabi = nv.gamma_e * cfg.drive.b_ac.0;
    let branches = resonance_branches(&nv, rabi, &ac, cfg.model.use_effective)?;
    let mut on_branch = 0;
    let mut worst = 0.0_f64;
    for (i, b) in branches.iter().enumerate() {
        let row = map.row(i);
        let k = (0..row.len()).min_by(|&a, &c| row[a].total_cmp(&row[c])).unwrap();
        let dev = distance_to_branches(b, mw[k]);
        worst = worst.max(dev);
        if dev <= tolerance * (1.0 + 1e-9) {
            on_branch += 1;
        }
    }
    let fraction = on_branch as f64 / map.rows() as f64;
    Ok(VerifyReport {
        rows: map.rows(),
        rows_on_branch: on_branch,
        fraction,
        max_deviation_hz: worst,
        tolerance_hz: tolerance,
        passed: fraction >= VERIFY_FRACTION,
    })
}

fn map(cfg: &RunConfig, g: &GlobalArgs) -> Result<(), CliError> {
    warn_regime(cfg)?;
    let nv = cfg.nv_params();
    let opts = cfg.model_options();
    let mw = cfg.grids.mw.grid()?;
    let ac = cfg.grids.ac.grid()?;
    let mut s = spectrum_2d(&nv, &cfg.drive_params(), &mw, &ac, &opts)?;
    require_valid(&s)?;
    let sigma = cfg.simulate.add_noise;
    add_noise(s.values_mut(), sigma, cfg.seed);
    let verify = if g.verify { Some(verify_map(&s, cfg)?) } else { None };

    let mut out = Bundle::new(cfg);
    out.add("map.csv", spectrum_table(&s, header(cfg, &opts)).render("nv-odmr map: p0 versus (omega_ac, omega_mw) [Hz]"));
    let failed = verify.as_ref().filter(|v| !v.passed).map(|v| {
        format!(
            "{} of {} row minima within {} Hz of a branch (need {:.0}%)",
            v.rows_on_branch,
            v.rows,
            v.tolerance_hz,
            100.0 * VERIFY_FRACTION
        )
    });
    out.json(
        "map.json",
        &MapReport {
            rows: s.rows(),
            cols: s.cols(),
            model_valid: true,
            noise_sigma: sigma,
            verify,
        },
    );
    if !g.no_plot {
        let x = mw.points();
        let y = ac.points();
        let rabi = nv.gamma_e * cfg.drive.b_ac.0;
        let branches = resonance_branches(&nv, rabi, &y, cfg.model.use_effective)?;
        let overlays: Vec<Series> = (0..4)
            .map(|k| Series {
                dashed: true,
                ..Series::line(
                    branches.iter().map(|b| (b[k] - nv.d) / 1e6).collect(),
                    y.iter().map(|r| r / 1e6).collect(),
                    "white",
                )
            })
            .collect();
        let plot = Plot {
            title: "ODMR map with analytic branches".into(),
            xlabel: "ω_mw − D (MHz)".into(),
            ylabel: "ω_AC (MHz)".into(),
            ..Plot::default()
        };
        let values = |i: usize, k: usize| s.row(i)[k];
        out.add(
            "map.svg",
            svg::heatmap(&mhz_from(&x, nv.d), &mhz_from(&y, 0.0), &values, &overlays, &plot),
        );
    }
    out.write()?;
    match failed {
        Some(msg) => Err(CliError::Verify(msg)),
        None => Ok(()),
    }
}

fn fit(cfg: &RunConfig, g: &GlobalArgs, input: &Path, sigma: Option<f64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(format!("reading {}", input.display()), e))?;
    let table = Table::parse(&text)?;
    let name = input.display().to_string();
    let header_sigma = table.meta.get("noise_sigma").and_then(|v| v.parse::<f64>().ok());
    let sigma = sigma.or(cfg.fit.noise_sigma).or(header_sigma).unwrap_or(0.0);
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(CliError::Config("noise sigma must be finite and >= 0".into()));
    }
    let mut out = Bundle::new(cfg);

    if table.has_columns(&csv::SENSITIVITY) {
        let j_work = table.meta.get("j_work_hz").and_then(|v| v.parse().ok()).unwrap_or(0.0);
        let x = table.column(0);
        let y = table.column(2);
        let gfit = fit_gamma(&x, &y, j_work, &cfg.lm_settings())?;
        out.json(
            "fit.json",
            &FitReport::Gamma {
                input: name,
                j_work_hz: j_work,
                fit: GammaReport::from(&gfit),
            },
        );
        if !g.no_plot {
            let model: Vec<f64> = x
                .iter()
                .map(|w| {
                    let g2 = gfit.gamma * gfit.gamma + j_work * j_work;
                    let d = w - gfit.center;
                    let r = (0.25 * d * d + g2) / g2;
                    gfit.scale * r * r
                })
                .collect();
            let plot = Plot {
                title: format!("Γ fit: {} MHz", svg_number(gfit.gamma / 1e6)),
                xlabel: "ω_AC (MHz)".into(),
                ylabel: "normalized δB".into(),
                series: vec![
                    Series {
                        points: true,
                        ..Series::line(mhz_from(&x, 0.0), y.clone(), PALETTE[0])
                    },
                    Series::line(mhz_from(&x, 0.0), model, PALETTE[1]),
                ],
                ..Plot::default()
            };
            out.add("fit.svg", plot.render());
        }
        out.write()?;
        return if gfit.converged {
            Ok(())
        } else {
            Err(CliError::Fit("Γ fit".into()))
        };
    }

    let spectrum = spectrum_from_table(&table)?;
    let settings = cfg.extract_settings(sigma);
    if !spectrum.is_2d() {
        let x = spectrum.mw.points();
        let result = detect_and_fit(&x, spectrum.values(), sigma, &settings.detect, &settings.fit)?
            .ok_or_else(|| CliError::Fit("no dips found".into()))?;
        out.json(
            "fit.json",
            &FitReport::Dips {
                input: name,
                noise_sigma: sigma,
                fit: DipFitReport::from(&result),
            },
        );
        if !g.no_plot {
            let origin = x[0];
            let model: Vec<f64> = x.iter().map(|v| result.model.eval(*v)).collect();
            let plot = Plot {
                title: format!("Lorentzian fit ({} dips)", result.model.dips.len()),
                xlabel: format!("ω_mw − {} MHz (MHz)", svg_number(origin / 1e6)),
                ylabel: "p0".into(),
                series: vec![
                    Series {
                        points: true,
                        ..Series::line(mhz_from(&x, origin), spectrum.values().to_vec(), PALETTE[0])
                    },
                    Series::line(mhz_from(&x, origin), model, PALETTE[1]),
                ],
                vlines: result.model.dips.iter().map(|d| (d.center - origin) / 1e6).collect(),
                hlines: Vec::new(),
            };
            out.add("fit.svg", plot.render());
        }
        out.write()?;
        return if result.converged {
            Ok(())
        } else {
            Err(CliError::Fit(result.message.unwrap_or_else(|| "Lorentzian fit".into())))
        };
    }

    let mut set = extract_branches(&spectrum, &settings)?;
    let branch_settings = BranchFitSettings {
        lm: cfg.lm_settings(),
        max_rounds: cfg.fit.max_rounds,
        initial: None,
    };
    let outcome = fit_branch_model(&set, &branch_settings);
    if let Ok(f) = &outcome {
        set.fit = Some(*f);
    }
    let error = outcome.as_ref().err().map(|e| e.to_string());
    out.json("fit.json", &FitReport::branches(name, sigma, &set, error));
    if !g.no_plot {
        let centers: Vec<f64> = set.points().map(|(_, c)| c).collect();
        let origin = if centers.is_empty() { 0.0 } else { median(&centers) };
        let (px, py): (Vec<f64>, Vec<f64>) = set.points().map(|(r, c)| ((c - origin) / 1e6, r / 1e6)).unzip();
        let mut series = vec![Series {
            points: true,
            ..Series::line(px, py, PALETTE[0])
        }];
        if let Some(f) = &set.fit {
            let ac = spectrum.ac.points();
            for k in 0..4 {
                series.push(Series::line(
                    ac.iter().map(|r| (fitted_branches(f, *r)[k] - origin) / 1e6).collect(),
                    ac.iter().map(|r| r / 1e6).collect(),
                    PALETTE[1],
                ));
            }
        }
        let plot = Plot {
            title: "Branch centers and fitted model".into(),
            xlabel: format!("ω_mw − {} MHz (MHz)", svg_number(origin / 1e6)),
            ylabel: "ω_AC (MHz)".into(),
            series,
            ..Plot::default()
        };
        out.add("fit.svg", plot.render());
    }
    out.write()?;
    outcome.map(|_| ()).map_err(CliError::from)
}

fn sensitivity(cfg: &RunConfig, g: &GlobalArgs, summary_only: bool) -> Result<(), CliError> {
    warn_regime(cfg)?;
    let nv = cfg.nv_params();
    let grid = cfg.grids.sensitivity.grid()?;
    let settings = SweepSettings {
        b_ac_work: cfg
            .sensitivity
            .b_ac_work
            .map_or_else(|| default_working_amplitude(&nv), |b| b.0),
        step: cfg.sensitivity.step.map(|s| s.0),
        threshold: cfg.sensitivity.threshold,
    };
    // the protocol probes |B⟩ only
    let opts = ModelOptions {
        use_effective: cfg.model.use_effective,
        dark_probe: None,
    };
    let curve = sensitivity_sweep(&nv, &cfg.drive_params(), &grid, &cfg.noise, &settings, &opts)?;
    let bandwidth = curve.bandwidth.ok_or_else(|| {
        CliError::Core(Error::GridTooNarrow(format!(
            "normalized sensitivity stays below {} on at least one side of the sweep; widen grids.sensitivity",
            curve.threshold
        )))
    })?;
    let gamma = fit_gamma_curve(&curve).map_err(|e| e.to_string());
    let report = SensitivityReport::new(&curve, bandwidth, gamma);

    let mut out = Bundle::new(cfg);
    out.json("sensitivity.json", &report);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if !summary_only {
        let mut meta = header(cfg, &opts);
        meta.insert("j_work_hz".into(), number(curve.j_work));
        meta.insert("b_ac_work_t".into(), number(curve.b_ac_work));
        meta.insert("delta_b_unit".into(), curve.unit.symbol().into());
        meta.insert("threshold".into(), number(curve.threshold));
        let mut table = Table::new(meta, &csv::SENSITIVITY);
        for i in 0..curve.omega_ac.len() {
            table
                .rows
                .push(vec![curve.omega_ac[i], curve.delta_b[i], curve.normalized[i]]);
        }
        out.add("sensitivity.csv", table.render("nv-odmr sensitivity under omega_mw = D + omega_ac/2"));
        if !g.no_plot {
            let plot = Plot {
                title: format!("Normalized sensitivity, bandwidth {} MHz", svg_number(bandwidth / 1e6)),
                xlabel: "ω_AC (MHz)".into(),
                ylabel: "δB / min δB".into(),
                series: vec![Series::line(mhz_from(&curve.omega_ac, 0.0), curve.normalized.clone(), PALETTE[0])],
                vlines: vec![curve.center / 1e6],
                hlines: vec![curve.threshold],
            };
            out.add("sensitivity.svg", plot.render());
        }
    }
    out.write()
}
