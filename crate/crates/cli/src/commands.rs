use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use lgwalk_core::analysis::{
    analytic_k_constant, analytic_k_dichotomic, macroscopicity, CorrelationReport,
};
use lgwalk_core::classical::{sample_classical_events, ClassicalMeasurement, ClassicalRun};
use lgwalk_core::eventlog::{merge_logs, read_log, write_log, EventLog, EventSource, LogHeader};
use lgwalk_core::measurement::prepared_state;
use lgwalk_core::pipeline::{
    exact_correlators, exact_report, simulate_events, EventSet, ExperimentTallies,
};
use lgwalk_core::stats::{analyze, fit_dephasing, DephasingFit, DephasingModel, ThetaCounts};
use lgwalk_core::walk::{run_walk, spin_population};
use lgwalk_core::{Error, ProtocolConfig, Spin, StreamSeed, Window};

use crate::output::{emit, fmt_float, to_json, write_file, Format, Table};
use crate::{Command, Common};

pub fn run(command: Command, common: &Common) -> Result<()> {
    let config = resolve_config(common)?;
    match command {
        Command::Walk => walk(&config, common),
        Command::LgTest => lg_test(&config, common),
        Command::ThetaScan {
            points,
            curve_dephasing,
        } => theta_scan(&config, common, points, curve_dephasing),
        Command::Analyze { paths } => analyze_logs(&paths, common),
        Command::Classical { p, invasive } => classical(&config, common, p, invasive),
        Command::Oracle => oracle(&config, common),
        Command::FitDephasing {
            paths,
            detection_error,
        } => fit(&paths, common, detection_error),
        Command::Macroscopicity { ell } => macro_measure(&config, common, ell),
    }
}

fn resolve_config(common: &Common) -> Result<ProtocolConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ProtocolConfig::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ProtocolConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(shots) = common.shots {
        config.shots_per_arm = shots;
    }
    if let Some(theta) = common.theta {
        config.theta = theta;
    }
    if let Some(p) = common.dephasing {
        config.dephasing = p;
    }
    config.validate()?;
    Ok(config)
}

fn walk(config: &ProtocolConfig, common: &Common) -> Result<()> {
    let spec = config.walk_spec()?;
    let initial = prepared_state(Spin::Up, Window::for_walk(config.steps, 0))?;
    let trace = run_walk(&spec, &initial)?;

    #[derive(Serialize)]
    struct Site {
        x: i64,
        probability: f64,
        up: f64,
        down: f64,
    }
    #[derive(Serialize)]
    struct Step {
        step: usize,
        spin_up: f64,
        sites: Vec<Site>,
    }
    let steps: Vec<Step> = trace
        .states()
        .iter()
        .enumerate()
        .map(|(step, state)| {
            let window = state.window();
            let sites = window
                .sites()
                .filter(|x| {
                    (x - step as i64).rem_euclid(2) == 0 && x.unsigned_abs() as usize <= step
                })
                .map(|x| {
                    let up = state.population(lgwalk_core::SpinSite::new(Spin::Up, x));
                    let down = state.population(lgwalk_core::SpinSite::new(Spin::Down, x));
                    Site {
                        x,
                        probability: up + down,
                        up,
                        down,
                    }
                })
                .collect();
            Step {
                step,
                spin_up: spin_population(state, Spin::Up),
                sites,
            }
        })
        .collect();

    let text = match common.format {
        Format::Json => {
            #[derive(Serialize)]
            struct WalkOutput<'a> {
                config: &'a ProtocolConfig,
                steps: Vec<Step>,
            }
            to_json(&WalkOutput { config, steps })?
        }
        Format::Csv => {
            let mut table = Table::new(config, &["step", "x", "probability", "up", "down"])?;
            for s in &steps {
                for site in &s.sites {
                    table.row(&[
                        s.step.to_string(),
                        site.x.to_string(),
                        fmt_float(site.probability),
                        fmt_float(site.up),
                        fmt_float(site.down),
                    ]);
                }
            }
            table.into_string()
        }
    };
    emit(
        common.out.as_deref(),
        &format!("walk.{}", common.format.extension()),
        &text,
    )?;
    Ok(())
}

fn report_csv(config: &ProtocolConfig, report: &CorrelationReport) -> Result<String> {
    let mut table = Table::new(
        config,
        &[
            "k12",
            "k13",
            "k23",
            "k",
            "k_prime",
            "witness_w",
            "sigma",
            "adjusted_bound",
        ],
    )?;
    table.row(&[
        fmt_float(report.k12),
        fmt_float(report.k13),
        fmt_float(report.k23),
        fmt_float(report.k),
        fmt_float(report.k_prime),
        fmt_float(report.witness_w),
        fmt_float(report.uncertainty.map_or(f64::NAN, |u| u.sigma)),
        fmt_float(report.adjusted_bound),
    ]);
    Ok(table.into_string())
}

/// Report text in the requested format. JSON carries the whole analysis.
fn render_analysis(events: &EventSet, config: &ProtocolConfig, format: Format) -> Result<String> {
    let analysis = analyze(events, config)?;
    match format {
        Format::Json => to_json(&analysis),
        Format::Csv => report_csv(config, &analysis.report),
    }
}

fn lg_test(config: &ProtocolConfig, common: &Common) -> Result<()> {
    let name = format!("report.{}", common.format.extension());
    if common.exact {
        let report = exact_report(config)?;
        let text = match common.format {
            Format::Json => {
                #[derive(Serialize)]
                struct ExactOutput<'a> {
                    config: &'a ProtocolConfig,
                    report: CorrelationReport,
                }
                to_json(&ExactOutput { config, report })?
            }
            Format::Csv => report_csv(config, &report)?,
        };
        emit(common.out.as_deref(), &name, &text)?;
        return Ok(());
    }
    let events = simulate_events(config)?;
    let header = LogHeader::new(EventSource::Quantum, config.clone());
    let text = render_analysis(
        &EventSet::new(events.iter().cloned()),
        config,
        common.format,
    )?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut log = Vec::new();
    write_log(&mut log, &header, &events)?;
    write_file(&dir, "events.jsonl", &log)?;
    write_file(&dir, &name, text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn read_logs(paths: &[PathBuf]) -> Result<Vec<EventLog>> {
    let read_one = |path: &Path| -> Result<EventLog> {
        if path == Path::new("-") {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            return read_log(text.as_bytes()).context("reading stdin");
        }
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        read_log(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
    };
    if paths.is_empty() {
        return Ok(vec![read_one(Path::new("-"))?]);
    }
    paths.iter().map(|p| read_one(p)).collect()
}

fn analyze_logs(paths: &[PathBuf], common: &Common) -> Result<()> {
    let log = merge_logs(read_logs(paths)?)?;
    let text = render_analysis(
        &EventSet::new(log.events),
        &log.header.config,
        common.format,
    )?;
    emit(
        common.out.as_deref(),
        &format!("report.{}", common.format.extension()),
        &text,
    )?;
    Ok(())
}

fn theta_scan(
    config: &ProtocolConfig,
    common: &Common,
    points: usize,
    curve_dephasing: f64,
) -> Result<()> {
    if points < 2 {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "need at least two angles".into(),
        }
        .into());
    }
    let seed = StreamSeed::new(config.seed);
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let theta = PI * i as f64 / (points - 1) as f64;
        let at = ProtocolConfig {
            theta,
            seed: seed.derive(i as u64).seed(),
            ..config.clone()
        };
        let k_sim = if common.exact {
            exact_correlators(&at)?.k()
        } else {
            let events = EventSet::new(simulate_events(&at)?);
            ExperimentTallies::from_events(&events)
                .correlators(&at.q2_scheme)?
                .k()
        };
        let dephased = ProtocolConfig {
            dephasing: curve_dephasing,
            ..at.clone()
        };
        rows.push(ScanRow {
            theta,
            k_sim,
            k_eq3: analytic_k_constant(theta),
            k_eq4: analytic_k_dichotomic(theta),
            k_dephased: exact_correlators(&dephased)?.k(),
        });
    }
    let text = match common.format {
        Format::Json => {
            #[derive(Serialize)]
            struct ScanOutput<'a> {
                config: &'a ProtocolConfig,
                curve_dephasing: f64,
                exact: bool,
                rows: Vec<ScanRow>,
            }
            to_json(&ScanOutput {
                config,
                curve_dephasing,
                exact: common.exact,
                rows,
            })?
        }
        Format::Csv => {
            let mut table =
                Table::new(config, &["theta", "k_sim", "k_eq3", "k_eq4", "k_dephased"])?;
            for r in &rows {
                table.row(&[r.theta, r.k_sim, r.k_eq3, r.k_eq4, r.k_dephased].map(fmt_float));
            }
            table.into_string()
        }
    };
    emit(
        common.out.as_deref(),
        &format!("theta_scan.{}", common.format.extension()),
        &text,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ScanRow {
    theta: f64,
    k_sim: f64,
    k_eq3: f64,
    k_eq4: f64,
    k_dephased: f64,
}

fn classical(
    config: &ProtocolConfig,
    common: &Common,
    p: f64,
    invasive: Option<f64>,
) -> Result<()> {
    let run = ClassicalRun {
        steps: config.steps,
        p_left: p,
        theta: config.theta,
        removal_shift: config.removal_shift,
        measurement: match invasive {
            Some(p_left_after) => ClassicalMeasurement::Invasive { p_left_after },
            None => ClassicalMeasurement::NonInvasive,
        },
    };
    let events = sample_classical_events(&run, config.shots_per_arm, StreamSeed::new(config.seed))?;
    let header = LogHeader::new(EventSource::Classical, config.clone());
    let mut log = Vec::new();
    write_log(&mut log, &header, &events)?;
    match &common.out {
        Some(dir) => {
            write_file(dir, "events.jsonl", &log)?;
        }
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(&log)?;
        }
    }
    Ok(())
}

fn oracle(config: &ProtocolConfig, common: &Common) -> Result<()> {
    let theta = config.theta;
    let (k_eq3, k_eq4) = (analytic_k_constant(theta), analytic_k_dichotomic(theta));
    let text = match common.format {
        Format::Json => {
            #[derive(Serialize)]
            struct OracleOutput<'a> {
                config: &'a ProtocolConfig,
                theta: f64,
                k_eq3: f64,
                k_eq4: f64,
            }
            to_json(&OracleOutput {
                config,
                theta,
                k_eq3,
                k_eq4,
            })?
        }
        Format::Csv => {
            let mut table = Table::new(config, &["theta", "k_eq3", "k_eq4"])?;
            table.row(&[theta, k_eq3, k_eq4].map(fmt_float));
            table.into_string()
        }
    };
    emit(
        common.out.as_deref(),
        &format!("oracle.{}", common.format.extension()),
        &text,
    )?;
    Ok(())
}

fn fit(paths: &[PathBuf], common: &Common, detection_error: Option<f64>) -> Result<()> {
    let logs = read_logs(paths)?;
    let steps = logs[0].header.config.steps;
    let logged_error = logs[0].header.config.detection_error;
    if logs.iter().any(|l| l.header.config.steps != steps) {
        bail!(Error::ProtocolInvalid(
            "logs have different walk lengths".into()
        ));
    }
    if detection_error.is_none()
        && logs
            .iter()
            .any(|l| l.header.config.detection_error != logged_error)
    {
        bail!(Error::ProtocolInvalid(
            "logs have different detection errors; pass --detection-error".into()
        ));
    }
    let model = DephasingModel {
        steps,
        detection_error: detection_error.unwrap_or(logged_error),
    };
    let data = ThetaCounts::from_events(logs.iter().flat_map(|l| &l.events));
    let result = fit_dephasing(&data, &model)?;

    #[derive(Serialize)]
    struct FitOutput {
        steps: usize,
        detection_error: f64,
        angles: Vec<f64>,
        events: u64,
        fit: DephasingFit,
    }
    let output = FitOutput {
        steps,
        detection_error: model.detection_error,
        angles: data.iter().map(|d| d.theta).collect(),
        events: data.iter().map(ThetaCounts::total).sum(),
        fit: result,
    };
    let text = match common.format {
        Format::Json => to_json(&output)?,
        Format::Csv => {
            let mut table = Table::new(
                &serde_json::json!({"steps": steps, "detection_error": model.detection_error}),
                &[
                    "dephasing",
                    "chi_squared",
                    "degrees_of_freedom",
                    "reduced_chi_squared",
                ],
            )?;
            table.row(&[
                fmt_float(result.dephasing),
                fmt_float(result.chi_squared),
                result.degrees_of_freedom.to_string(),
                fmt_float(result.reduced_chi_squared),
            ]);
            table.into_string()
        }
    };
    emit(
        common.out.as_deref(),
        &format!("fit.{}", common.format.extension()),
        &text,
    )?;
    Ok(())
}

fn macro_measure(config: &ProtocolConfig, common: &Common, ell: Option<f64>) -> Result<()> {
    let duration_s = config.total_duration_s();
    let mu = macroscopicity(duration_s, ell)?;
    let text = match common.format {
        Format::Json => {
            #[derive(Serialize)]
            struct MacroOutput<'a> {
                config: &'a ProtocolConfig,
                duration_s: f64,
                ell_m: Option<f64>,
                mu: f64,
            }
            to_json(&MacroOutput {
                config,
                duration_s,
                ell_m: ell,
                mu,
            })?
        }
        Format::Csv => {
            let mut table = Table::new(config, &["duration_s", "ell_m", "mu"])?;
            table.row(&[
                fmt_float(duration_s),
                ell.map(fmt_float).unwrap_or_default(),
                fmt_float(mu),
            ]);
            table.into_string()
        }
    };
    emit(
        common.out.as_deref(),
        &format!("macroscopicity.{}", common.format.extension()),
        &text,
    )?;
    Ok(())
}
