//! Acceptance criteria, run in sequence with one PASS/FAIL line each.
//!
//! Runs without the libtest harness so that the per-criterion runtimes are
//! measured without other tests competing for the cores.

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::Duration as Days;
use nalgebra::{DMatrix, DVector};
use pvcast::decomp::{emd, loess, mstl, stl, vmd, ComponentKind, EmdParams, MstlParams, StlParams, VmdParams};
use pvcast::eval::{
    nmae, nmae_values, nrmse_values, site_aggregate, Aggregation, EvaluationInput, SITE_INDIV, SITE_SUM,
};
use pvcast::experiment::{run_experiment, GridSpec, PlantData, SEASONAL_NAIVE};
use pvcast::features::{classify_weather, DailyIrradiance, MeteorologyMode, PARTIALLY_CLOUDY_MAX_KD, SUNNY_MAX_KD};
use pvcast::forecast::{Mlp, TrainConfig};
use pvcast::frame::{SplitSpec, TestPeriod};
use pvcast::ingest::{self, hourly_frame, CsvSchema, ParseOptions, PlantSpec};
use pvcast::synth::{generate, generate_site, record_set, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    ensure(elapsed < budget, || format!("took {elapsed:.2?}, budget {budget:?}"))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn sine(n: usize, period: f64, amplitude: f64) -> Vec<f64> {
    (0..n).map(|i| amplitude * (TAU * i as f64 / period).sin()).collect()
}

/// Hourly plant frames from generated data, read back through the CSV
/// export layout of the real plant data.
fn plants_via_csv(cfg: &SynthConfig, specs: &[PlantSpec]) -> Vec<PlantData> {
    let site = generate_site(cfg, specs).unwrap();
    let mut csv = Vec::new();
    ingest::write_csv(&record_set(&site), &mut csv).unwrap();
    let opts = ParseOptions {
        default_plant: specs[0].plant_id.clone(),
        utc_offset_minutes: cfg.utc_offset_minutes,
    };
    let set = ingest::parse_csv_reader(csv.as_slice(), &CsvSchema::default(), &opts).unwrap();
    specs
        .iter()
        .map(|spec| PlantData {
            spec: spec.clone(),
            hourly: hourly_frame(&set, spec).unwrap().0,
        })
        .collect()
}

fn test_block(cfg: &SynthConfig, first_day: i64, days: i64) -> SplitSpec {
    let start = cfg.start + Days::days(first_day);
    SplitSpec::default().with_test_period(TestPeriod {
        start,
        end: start + Days::days(days),
    })
}

/// 1. The published headline scores need the real plant data and the full
/// attention model, so only the report shape is checked here.
fn report_shape() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig {
        n_days: 40,
        rng_seed: 11,
        ..Default::default()
    };
    let specs = PlantSpec::dkasc_plants()[..2].to_vec();
    let plants = plants_via_csv(&cfg, &specs);
    let grid = GridSpec {
        methods: vec!["raw".into(), "mstl".into(), SEASONAL_NAIVE.into()],
        train: TrainConfig {
            hidden: vec![8],
            max_epochs: 3,
            patience: 1,
            ..Default::default()
        },
        split: test_block(&cfg, 30, 10),
        ..Default::default()
    };
    let report = run_experiment(&plants, &grid, 0).map_err(|e| e.to_string())?.report;
    let rows = ["PV-01", "PV-02", SITE_INDIV, SITE_SUM];
    ensure(report.plants == rows, || format!("rows {:?}", report.plants))?;
    for mode in MeteorologyMode::ALL {
        let by_plant = report.table_plants(mode);
        ensure(by_plant.rows.len() == 4 && by_plant.header.len() == 6, || "plant table shape".into())?;
        for plant in rows {
            let methods = report.table_methods(plant, mode);
            ensure(methods.rows.len() == 2 && methods.header.len() == 3, || "method table shape".into())?;
            let weather = report.table_weather(plant, mode);
            ensure(weather.rows.len() == 3 && weather.header.len() == 6, || "weather table shape".into())?;
        }
    }
    let markdown = report.tables_markdown();
    ensure(markdown.contains("###"), || "no tables rendered".into())?;
    Ok(format!(
        "headline values not reproducible without the plant data; report shape ok ({} cells, {:.1?})",
        report.cells.len(),
        t.elapsed()
    ))
}

/// 2. Normalised errors against direct evaluation of their definitions.
fn metric_oracles() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases = 500;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(1..60);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let y_hat: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..12.0)).collect();
        let y_max = rng.random_range(0.5..20.0);
        let mut abs_sum = 0.0;
        let mut sq_sum = 0.0;
        for i in 0..n {
            let e = y[i] - y_hat[i];
            abs_sum += e.abs();
            sq_sum += e * e;
        }
        let want_mae = 100.0 * abs_sum / (n as f64 * y_max);
        let want_rmse = 100.0 * (sq_sum / n as f64).sqrt() / y_max;
        let got_mae = nmae_values(&y, &y_hat, y_max).map_err(|e| e.to_string())?;
        let got_rmse = nrmse_values(&y, &y_hat, y_max).map_err(|e| e.to_string())?;
        for (got, want) in [(got_mae, want_mae), (got_rmse, want_rmse)] {
            let rel = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-12, || format!("relative error {worst:e}"))?;
    within_budget(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{cases} cases, worst relative error {worst:.1e}, {:.2?}", t.elapsed()))
}

/// 3. Components add back up to the input.
fn additivity() -> Outcome {
    let t = Instant::now();
    let series = 1000;
    let residuals = (0..series as u64)
        .into_par_iter()
        .map(|seed| -> Result<(f64, f64), String> {
            let mut rng = ChaCha8Rng::seed_from_u64(3_000 + seed);
            let n = rng.random_range(240..=2000);
            let phase = rng.random_range(0.0..TAU);
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    let x = i as f64;
                    rng.random_range(-1.0..1.0) + 3.0 * ((TAU * x / 24.0) + phase).sin() + 0.01 * x
                        + (TAU * x / 168.0).cos()
                })
                .collect();
            let scale = max_abs(&y);
            let residual = |r: pvcast::Decomposition| -> f64 {
                let back = r.recompose();
                max_abs(&back.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>()) / scale
            };
            let periods: &[usize] = if n >= 2 * 168 { &[24, 168] } else { &[24] };
            let seasonal = residual(stl(&y, &StlParams::new(24)).map_err(|e| e.to_string())?)
                .max(residual(mstl(&y, &MstlParams::new(periods, false)).map_err(|e| e.to_string())?));
            let empirical = residual(emd(&y, &EmdParams::default()).map_err(|e| e.to_string())?);
            Ok((seasonal, empirical))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let worst_stl = residuals.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_emd = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    ensure(worst_stl <= 1e-9, || format!("STL/MSTL residual {worst_stl:e} of max|y|"))?;
    ensure(worst_emd <= 1e-8, || format!("EMD residual {worst_emd:e} of max|y|"))?;
    within_budget(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{series} series, STL/MSTL {worst_stl:.1e}, EMD {worst_emd:.1e} of max|y|, {:.1?}",
        t.elapsed()
    ))
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        (1.0 - u.powi(3)).powi(3)
    }
}

/// Local fit at `x0` by a QR solve of the weighted design matrix.
fn wls_fit(x: &[f64], y: &[f64], x0: f64, span: f64, degree: usize) -> f64 {
    let n = x.len();
    let q = ((span * n as f64).ceil() as usize).clamp(1, n);
    let mut d: Vec<f64> = x.iter().map(|xi| (xi - x0).abs()).collect();
    d.sort_by(f64::total_cmp);
    let h = d[q - 1];
    let rows: Vec<usize> = (0..n).filter(|&i| (x[i] - x0).abs() < h).collect();
    let a = DMatrix::from_fn(rows.len(), degree + 1, |r, c| {
        let i = rows[r];
        tricube((x[i] - x0).abs() / h).sqrt() * ((x[i] - x0) / h).powi(c as i32)
    });
    let b = DVector::from_fn(rows.len(), |r, _| tricube((x[rows[r]] - x0).abs() / h).sqrt() * y[rows[r]]);
    let beta = a.svd(true, true).solve(&b, 1e-14).expect("solvable");
    beta[0]
}

/// 4. LOESS against an explicit weighted least-squares solve.
fn loess_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for s in 0..50 {
        let n = rng.random_range(50..=200);
        let mut x = Vec::with_capacity(n);
        let mut at: f64 = 0.0;
        for _ in 0..n {
            at += rng.random_range(0.2..1.5);
            x.push(at);
        }
        let y: Vec<f64> = x.iter().map(|v| (v / 7.0).sin() + rng.random_range(-0.3..0.3)).collect();
        let span = rng.random_range(0.15..0.9);
        let degree = 1 + s % 2;
        let mut eval: Vec<f64> = x.clone();
        eval.extend(x.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        let got = loess(&x, &y, &eval, span, degree, None).map_err(|e| e.to_string())?;
        for (&x0, g) in eval.iter().zip(got) {
            worst = worst.max((g - wls_fit(&x, &y, x0, span, degree)).abs());
            points += 1;
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    within_budget(t.elapsed(), Duration::from_secs(10))?;
    Ok(format!("50 series, {points} points, max deviation {worst:.1e}, {:.2?}", t.elapsed()))
}

/// 5. Daily and weekly seasons recovered from eight weeks of hourly data.
fn mstl_recovery() -> Outcome {
    let t = Instant::now();
    let n = 8 * 168;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let daily = sine(n, 24.0, 2.0);
    let weekly = sine(n, 168.0, 1.0);
    let y: Vec<f64> = (0..n)
        .map(|i| 10.0 + 0.002 * i as f64 + daily[i] + weekly[i] + rng.random_range(-0.1..0.1))
        .collect();
    let r = mstl(&y, &MstlParams::new(&[24, 168], false)).map_err(|e| e.to_string())?;
    let c24 = correlation(r.component("seasonal_24").ok_or("no daily component")?, &daily);
    let c168 = correlation(r.component("seasonal_168").ok_or("no weekly component")?, &weekly);
    let share = variance(r.component("remainder").ok_or("no remainder")?) / variance(&y);
    ensure(c24 >= 0.99 && c168 >= 0.99, || format!("correlations {c24:.4}, {c168:.4}"))?;
    ensure(share <= 0.02, || format!("remainder variance {:.2}% of input", 100.0 * share))?;
    within_budget(t.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "corr 24h {c24:.4}, 168h {c168:.4}, remainder {:.2}% of variance, {:.2?}",
        100.0 * share,
        t.elapsed()
    ))
}

fn dominant_bin(v: &[f64]) -> usize {
    let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    (1..buf.len() / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap_or(0)
}

/// 6. VMD on one and on two pure tones.
fn vmd_tones() -> Outcome {
    let t = Instant::now();
    let n = 400;
    let tone = |f: f64| -> Vec<f64> { (0..n).map(|i| (TAU * f * i as f64).cos()).collect() };
    let one = tone(0.05);
    let r = vmd(&one, &VmdParams::with_modes(1)).map_err(|e| e.to_string())?;
    let ComponentKind::Mode { center_frequency } = r.components[0].kind else {
        return Err("VMD component is not a mode".into());
    };
    let freq_err = (center_frequency - 0.05).abs() / 0.05;
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = r.components[0].values.iter().zip(&one).map(|(a, b)| a - b).collect();
    let rec_err = l2(&diff) / l2(&one);
    ensure(freq_err <= 0.05, || format!("center frequency off by {:.2}%", 100.0 * freq_err))?;
    ensure(rec_err <= 0.05, || format!("reconstruction error {:.2}%", 100.0 * rec_err))?;

    let (f1, f2) = (0.05, 0.25);
    let two: Vec<f64> = tone(f1).iter().zip(tone(f2)).map(|(a, b)| a + b).collect();
    let r = vmd(&two, &VmdParams::with_modes(2)).map_err(|e| e.to_string())?;
    let bins: Vec<usize> = r.components.iter().map(|c| dominant_bin(&c.values)).collect();
    let want = [(f1 * n as f64).round() as usize, (f2 * n as f64).round() as usize];
    ensure(bins == want, || format!("dominant bins {bins:?}, expected {want:?}"))?;
    within_budget(t.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "K=1 frequency error {:.3}%, reconstruction {:.3}%; K=2 bins {bins:?}, {:.2?}",
        100.0 * freq_err,
        100.0 * rec_err,
        t.elapsed()
    ))
}

/// 7. Backpropagated pinball-loss gradient against central differences.
fn gradient_check() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let quantiles = [0.1, 0.5, 0.9];
    let (n_in, horizon, batch) = (6, 2, 5);
    let mut net: Mlp<f64> = Mlp::new(n_in, &[7, 5], horizon * quantiles.len(), &mut rng);
    let mut params = net.params();
    for p in params.iter_mut() {
        *p += rng.random_range(-0.2..0.2);
    }
    net.set_params(&params);
    let inputs: Vec<f64> = (0..batch * n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets: Vec<f64> = (0..batch * horizon).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, grad) = net.loss_and_gradient(&inputs, &targets, &quantiles);

    let residual_signs = |net: &Mlp<f64>| -> Vec<bool> {
        (0..batch)
            .flat_map(|b| {
                let out = net.forward(&inputs[b * n_in..(b + 1) * n_in]);
                let y = &targets[b * horizon..(b + 1) * horizon];
                out.into_iter().enumerate().map(move |(j, o)| y[j / quantiles.len()] > o).collect::<Vec<_>>()
            })
            .collect()
    };
    let h = 1e-6;
    let (mut checked, mut skipped) = (0, 0);
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut probe = net.clone();
        let mut p = params.clone();
        p[i] = params[i] + h;
        probe.set_params(&p);
        let (up, up_signs) = (probe.loss(&inputs, &targets, &quantiles), residual_signs(&probe));
        p[i] = params[i] - h;
        probe.set_params(&p);
        let (down, down_signs) = (probe.loss(&inputs, &targets, &quantiles), residual_signs(&probe));
        if up_signs != down_signs {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs());
        if scale > 1e-7 {
            worst = worst.max((grad[i] - numeric).abs() / scale);
        }
        checked += 1;
    }
    ensure(checked > params.len() / 2, || format!("only {checked} of {} parameters checked", params.len()))?;
    ensure(worst <= 1e-4, || format!("relative gradient error {worst:e}"))?;
    within_budget(t.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "{checked} parameters checked ({skipped} at kinks skipped), worst relative error {worst:.1e}, {:.2?}",
        t.elapsed()
    ))
}

/// 8. Full desk-scale experiment against the seasonal-naive baseline.
fn end_to_end() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig {
        n_days: 120,
        rng_seed: 0,
        ..Default::default()
    };
    let plants = vec![PlantData {
        spec: cfg.plant.clone(),
        hourly: hourly_frame(&record_set(&[generate(&cfg).unwrap()]), &cfg.plant).unwrap().0,
    }];
    let grid = GridSpec {
        methods: vec!["raw".into(), "mstl".into(), SEASONAL_NAIVE.into()],
        split: test_block(&cfg, 45, 30),
        ..Default::default()
    };
    let first = run_experiment(&plants, &grid, 0).map_err(|e| e.to_string())?;
    let once = t.elapsed();
    let second = run_experiment(&plants, &grid, 0).map_err(|e| e.to_string())?;
    ensure(first.report == second.report, || "rerun with the same seed differs".into())?;

    let score = |method: &str, mode: MeteorologyMode| {
        let c = first
            .report
            .cells
            .iter()
            .find(|c| c.key.method == method && c.key.mode == mode)
            .expect("cell present");
        (c.scores.overall.nmae, c.scores.overall.nrmse)
    };
    let mut summary = Vec::new();
    for mode in MeteorologyMode::ALL {
        let (naive, _) = score(SEASONAL_NAIVE, mode);
        for method in ["raw", "mstl"] {
            let (m, _) = score(method, mode);
            let gain = 1.0 - m / naive;
            summary.push(format!("{method}/{} {m:.2} vs naive {naive:.2}", mode.label()));
            ensure(gain >= 0.2, || {
                format!("{method}/{}: NMAE {m:.2} only {:.0}% below naive {naive:.2}", mode.label(), 100.0 * gain)
            })?;
        }
    }
    for method in ["raw", "mstl"] {
        let (a_mae, a_rmse) = score(method, MeteorologyMode::Available);
        let (u_mae, u_rmse) = score(method, MeteorologyMode::Unavailable);
        ensure(a_mae < u_mae && a_rmse < u_rmse, || {
            format!("{method}: available {a_mae:.2}/{a_rmse:.2} vs unavailable {u_mae:.2}/{u_rmse:.2}")
        })?;
    }
    within_budget(once, Duration::from_secs(600))?;
    Ok(format!("NMAE {}; deterministic; one run {:.1?}", summary.join(", "), once))
}

/// 9. Weather classes recomputed from generated irradiance.
fn weather_classification() -> Outcome {
    let t = Instant::now();
    let (mut agree, mut total, mut boundary) = (0, 0, 0);
    for seed in 0..3 {
        let d = generate(&SynthConfig {
            n_days: 365,
            rng_seed: seed,
            ..Default::default()
        })
        .unwrap();
        let by_day = pvcast::FeatureFrame::over(&d.power_series()).day_groups();
        for &(date, class, kd) in &d.days {
            if [SUNNY_MAX_KD, PARTIALLY_CLOUDY_MAX_KD].iter().any(|b| (kd - b).abs() < 0.005) {
                boundary += 1;
                continue;
            }
            let Some(rows) = by_day.get(&date) else { continue };
            let ghi: Vec<f64> = rows.iter().map(|&r| d.ghi[r]).collect();
            let dhi: Vec<f64> = rows.iter().map(|&r| d.dhi[r]).collect();
            let kd = DailyIrradiance::new(date, ghi, dhi)
                .and_then(|day| day.clearness_index())
                .map_err(|e| e.to_string())?;
            total += 1;
            if classify_weather(kd).map_err(|e| e.to_string())? == class {
                agree += 1;
            }
        }
    }
    let rate = agree as f64 / total as f64;
    ensure(rate >= 0.99, || format!("{agree}/{total} days agree"))?;
    within_budget(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "{agree}/{total} days agree ({:.2}%), {boundary} boundary days excluded, {:.2?}",
        100.0 * rate,
        t.elapsed()
    ))
}

/// 10. Opposing plant errors cancel in the individually summed site
/// forecast.
fn site_aggregation() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig {
        n_days: 30,
        rng_seed: 10,
        ..Default::default()
    };
    let specs = PlantSpec::dkasc_plants()[..2].to_vec();
    let site = generate_site(&cfg, &specs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = site[0].len();
    let shared: Vec<f64> = (0..n).map(|i| if site[0].power[i] > 0.0 { rng.random_range(-0.6..0.6) } else { 0.0 }).collect();
    let inputs: Vec<EvaluationInput> = site
        .iter()
        .zip([1.0, -0.8])
        .map(|(d, sign)| {
            let y_hat = d
                .power
                .iter()
                .zip(&shared)
                .map(|(p, e)| p + sign * e + if *p > 0.0 { rng.random_range(-0.05..0.05) } else { 0.0 })
                .collect();
            let weather = d.weather_labels().into_iter().collect();
            EvaluationInput::new(d.plant.plant_id.clone(), d.timestamps.clone(), d.utc_offset_minutes, d.power.clone(), y_hat)
                .map(|i| i.with_weather(weather))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let combined = site_aggregate(&inputs, Aggregation::Indiv, None).map_err(|e| e.to_string())?;
    let site_nmae = nmae(&combined).map_err(|e| e.to_string())?;
    let plant_nmae: Vec<f64> = inputs.iter().map(nmae).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(plant_nmae.iter().all(|&p| site_nmae < p), || {
        format!("site {site_nmae:.2} vs plants {plant_nmae:.2?}")
    })?;
    within_budget(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "Site-Indiv NMAE {site_nmae:.2} below plants {:.2} and {:.2}, {:.2?}",
        plant_nmae[0],
        plant_nmae[1],
        t.elapsed()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("report shape for the published tables", report_shape),
        ("metric oracles", metric_oracles),
        ("decomposition additivity", additivity),
        ("LOESS equals weighted least squares", loess_oracle),
        ("MSTL seasonal recovery", mstl_recovery),
        ("VMD tone recovery", vmd_tones),
        ("pinball-loss gradient check", gradient_check),
        ("end-to-end experiment", end_to_end),
        ("weather classification", weather_classification),
        ("site aggregation of opposing errors", site_aggregation),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if only.is_some_and(|o| o != number) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("criterion {number:>2} PASS  {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("criterion {number:>2} FAIL  {name}: {reason}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
