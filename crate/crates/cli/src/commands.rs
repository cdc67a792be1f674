//! Subcommand implementations.

use std::path::PathBuf;

use hdblind_core::estimate::Estimate;
use hdblind_core::guard::{block_verdicts, default_policy_grid, roc_sweep, GuardPolicy, RocRow};
use hdblind_core::keyrate::KeyRateReport;
use hdblind_core::mc::{run, run_range, simulate_lo_characterization, simulate_moments, SimScenario};
use hdblind_core::model::AttackModel;
use hdblind_core::presets::R_BREACH;
use hdblind_core::sweep::{breach_point, evaluate_point, grid, merge_grids, sweep, AttackPoint, VaPolicy};
use serde::Serialize;
use serde_json::Value;

use crate::config::{parse_assignment, read_config_file, RunConfig, VaSetting};
use crate::error::{CliError, Result};
use crate::output::{Formats, Sink};
use crate::svg::{Chart, Series, Style};

/// Upper bound on markers drawn per series in scatter SVGs.
const SVG_SCATTER_MAX: usize = 5_000;
/// Lower display limit of excess-noise plots; the saturated estimate dives far below zero.
const XI_PLOT_FLOOR: f64 = -1.0;
const FIG4_PRESETS: [&str; 3] = ["fig4a-r0.10", "fig4a-r0.11", "fig4b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Guard,
    Run { dump: bool },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fig2 => "fig2",
            Command::Fig3 => "fig3",
            Command::Fig4 => "fig4",
            Command::Fig5 => "fig5",
            Command::Fig6 => "fig6",
            Command::Guard => "guard",
            Command::Run { .. } => "run",
        }
    }

    fn default_preset(&self) -> &'static str {
        match self {
            Command::Fig2 | Command::Run { .. } => "baseline",
            Command::Fig3 | Command::Fig4 | Command::Guard => "fig4b",
            Command::Fig5 => "fig5",
            Command::Fig6 => "fig6",
        }
    }
}

/// A parsed invocation: which command, and how to build its configuration.
#[derive(Debug, Clone)]
pub struct Request {
    pub command: Command,
    pub preset: Option<String>,
    pub config_file: Option<PathBuf>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub out: PathBuf,
    pub formats: Formats,
}

impl Request {
    /// Preset defaults, then the config file, then `--set`, then `--seed`/`--n`.
    pub fn resolve(&self, preset: &str) -> Result<RunConfig> {
        let mut overrides = Vec::new();
        if let Some(path) = &self.config_file {
            overrides.extend(read_config_file(path)?);
        }
        for s in &self.sets {
            overrides.push(parse_assignment(s)?);
        }
        if let Some(seed) = self.seed {
            overrides.push(("sim.seed".into(), Value::from(seed)));
        }
        if let Some(n) = self.n {
            overrides.push(("sim.n".into(), Value::from(n as u64)));
        }
        RunConfig::from_preset(preset)?.with_overrides(overrides)
    }

    fn sink(&self, preset: &str, cfg: &RunConfig) -> Result<Sink> {
        Sink::new(&self.out, self.command.name(), preset, cfg, self.formats)
    }

    /// Runs the command and returns the files it wrote.
    pub fn execute(&self) -> Result<Vec<PathBuf>> {
        if self.command == Command::Fig4 {
            return match &self.preset {
                Some(p) => self.fig4_one(p),
                None => {
                    let mut all = Vec::new();
                    for p in FIG4_PRESETS {
                        all.extend(self.fig4_one(p)?);
                    }
                    Ok(all)
                }
            };
        }
        let preset = self.preset.as_deref().unwrap_or(self.command.default_preset());
        let cfg = self.resolve(preset)?;
        let mut sink = self.sink(preset, &cfg)?;
        match self.command {
            Command::Fig2 => fig2(&cfg, &mut sink)?,
            Command::Fig3 => fig3(&cfg, &mut sink)?,
            Command::Fig5 => fig5(&cfg, &mut sink)?,
            Command::Fig6 => fig6(&cfg, &mut sink)?,
            Command::Guard => guard(&cfg, &mut sink)?,
            Command::Run { dump } => run_single(&cfg, &mut sink, dump)?,
            Command::Fig4 => unreachable!("handled above"),
        }
        Ok(sink.written().to_vec())
    }

    fn fig4_one(&self, preset: &str) -> Result<Vec<PathBuf>> {
        let cfg = self.resolve(preset)?;
        let mut sink = self.sink(preset, &cfg)?;
        fig4(&cfg, preset, &mut sink)?;
        Ok(sink.written().to_vec())
    }
}

fn va_policy(cfg: &RunConfig) -> VaPolicy {
    match cfg.protocol.v_a {
        VaSetting::Auto => VaPolicy::Optimized,
        VaSetting::Fixed(v) => VaPolicy::Fixed(v),
    }
}

fn fig2(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let f = &cfg.fig2;
    if !(f.power_step_uw > 0.0) || !(f.power_max_uw >= 0.0) {
        return Err(CliError::Config(
            "fig2 power grid needs a positive step and nonnegative maximum".into(),
        ));
    }
    let powers = grid(0.0, f.power_max_uw, f.power_step_uw);
    let mut rows = Vec::new();
    let mut settings = Vec::new();
    let mut mean_chart = Chart::new("HD output mean vs LO power", "LO power (uW)", "mean (V)");
    let mut var_chart = Chart::new("HD output variance vs LO power", "LO power (uW)", "variance (V^2)");
    for (k, onset) in [f.onset1_uw, f.onset2_uw].into_iter().enumerate() {
        let label = format!("setting{}", k + 1);
        let t_port = cfg.bench.t_port_saturating_at(&cfg.detector, onset);
        let pts = simulate_lo_characterization(
            &cfg.detector,
            &cfg.bench,
            &powers,
            t_port,
            f.n_per_point,
            cfg.sim.seed.wrapping_add(k as u64),
        )?;
        let name = format!("{label} (onset {onset} uW)");
        mean_chart = mean_chart.with(Series::new(
            &name,
            pts.iter().map(|p| (p.power_uw, p.mean_v)).collect(),
            Style::Line,
        ));
        var_chart = var_chart.with(Series::new(
            &name,
            pts.iter().map(|p| (p.power_uw, p.var_v2)).collect(),
            Style::Line,
        ));
        rows.extend(pts.iter().map(|p| (p.power_uw, p.mean_v, p.var_v2, label.clone())));
        settings.push(serde_json::json!({ "setting": label, "onset_uw": onset, "t_port": t_port }));
    }
    sink.csv("fig2.csv", &["power_uW", "mean_V", "var_V2", "setting"], &rows)?;
    sink.json("fig2.json", &serde_json::json!({ "settings": settings }))?;
    sink.svg("fig2_mean.svg", &mean_chart.render())?;
    sink.svg("fig2_var.svg", &var_chart.render())
}

fn fig3(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let f = &cfg.fig3;
    if !(f.r_step > 0.0) || !(f.r_max >= 0.0) {
        return Err(CliError::Config(
            "fig3 ratio grid needs a positive step and nonnegative maximum".into(),
        ));
    }
    let det = &cfg.detector;
    let rows: Vec<(f64, f64, f64, f64, f64, f64)> = grid(0.0, f.r_max, f.r_step)
        .into_iter()
        .map(|r| {
            let a = AttackModel {
                active: true,
                r,
                ..cfg.attack
            };
            let alt = AttackModel {
                f_ext: f.f_ext_alt,
                ..a
            };
            (
                r,
                a.external_shot_noise(det),
                a.external_fluctuation_noise(det),
                alt.external_fluctuation_noise(det),
                a.xi_ir(),
                a.xi_tech(),
            )
        })
        .collect();
    sink.csv(
        "fig3.csv",
        &["r", "n0_ext", "vf_ext_f1", "vf_ext_f2", "xi_ir", "xi_tech"],
        &rows,
    )?;
    let col = |i: usize| -> Vec<(f64, f64)> {
        rows.iter()
            .map(|row| {
                let v = [row.1, row.2, row.3, row.4, row.5][i];
                (row.0, v)
            })
            .collect()
    };
    let chart = Chart::new("Excess noise contributions vs R", "R", "noise (SNU)")
        .with(Series::new("N0,ext", col(0), Style::Line))
        .with(Series::new(
            format!("Vf,ext f={}", cfg.attack.f_ext),
            col(1),
            Style::Line,
        ))
        .with(Series::new(format!("Vf,ext f={}", f.f_ext_alt), col(2), Style::Dashed))
        .with(Series::new("xi_IR", col(3), Style::Line))
        .with(Series::new("xi_tech", col(4), Style::Line));
    sink.svg("fig3.svg", &chart.render())
}

#[derive(Serialize)]
struct Fig4Summary {
    preset: String,
    length_km: f64,
    r: f64,
    v_a: f64,
    t_nominal: f64,
    /// ξ_IR + ξ_tech + ξ_ext, what the linear estimate should return.
    xi_expected_linear: f64,
    linear: Estimate,
    clipped: Estimate,
    key_rate: KeyRateReport,
    xi_null: f64,
    breach: bool,
}

fn fig4(cfg: &RunConfig, preset: &str, sink: &mut Sink) -> Result<()> {
    let scn = cfg.scenario()?;
    let point = evaluate_point(
        &scn,
        scn.channel.length_km,
        scn.attack.r,
        VaPolicy::Fixed(scn.protocol.v_a),
    )?;
    let xi_ext = scn.attack.external_excess_noise(&scn.detector, &scn.channel)?;
    let summary = Fig4Summary {
        preset: preset.to_string(),
        length_km: scn.channel.length_km,
        r: scn.attack.r,
        v_a: point.v_a,
        t_nominal: scn.channel.transmission(),
        xi_expected_linear: scn.attack.xi_ir() + scn.attack.xi_tech() + xi_ext,
        linear: point.linear,
        clipped: point.clipped,
        key_rate: point.report,
        xi_null: point.xi_null(),
        breach: point.breach,
    };
    sink.json(&format!("fig4_{preset}.json"), &summary)?;

    let k = cfg.fig4.scatter_points.min(scn.n);
    let linear = run_range(
        &SimScenario { clipping: false, ..scn },
        0..k,
        rayon::current_num_threads(),
    )?;
    let clipped = run_range(
        &SimScenario { clipping: true, ..scn },
        0..k,
        rayon::current_num_threads(),
    )?;
    let rows: Vec<(usize, f64, f64, f64)> = (0..k)
        .map(|i| (i, linear.x_a[i], linear.x_b[i], clipped.x_b[i]))
        .collect();
    sink.csv(
        &format!("fig4_{preset}_scatter.csv"),
        &["pulse_index", "x_a", "x_bi", "x_b"],
        &rows,
    )?;

    let m = k.min(SVG_SCATTER_MAX);
    let chart = Chart::new(&format!("Quadratures, {preset}"), "X_A (SNU)", "X_B (SNU)")
        .with(Series::new(
            "linear X_Bi",
            rows[..m].iter().map(|r| (r.1, r.2)).collect(),
            Style::Markers,
        ))
        .with(Series::new(
            "saturated X_B",
            rows[..m].iter().map(|r| (r.1, r.3)).collect(),
            Style::Markers,
        ));
    sink.svg(&format!("fig4_{preset}.svg"), &chart.render())
}

fn fig5(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let f = &cfg.fig5;
    if !(f.l_step_km > 0.0) || !(f.l_max_km >= 0.0) || f.ratios.is_empty() {
        return Err(CliError::Config(
            "fig5 needs a positive distance step and at least one ratio".into(),
        ));
    }
    let base = cfg.scenario()?;
    let lengths = grid(0.0, f.l_max_km, f.l_step_km);
    let points = sweep(&base, &lengths, &f.ratios, va_policy(cfg))?;

    let mut by_r: Vec<&AttackPoint> = points.iter().collect();
    by_r.sort_by(|a, b| a.r.total_cmp(&b.r).then(a.length_km.total_cmp(&b.length_km)));
    let rows: Vec<(f64, f64, f64)> = by_r.iter().map(|p| (p.length_km, p.r, p.clipped.t_hat)).collect();
    sink.csv("fig5.csv", &["L_km", "r", "t_hat"], &rows)?;

    let linear: Vec<(f64, f64, f64)> = lengths
        .iter()
        .map(|&l| {
            let p = points
                .iter()
                .find(|p| p.length_km == l)
                .expect("every length was swept");
            let t = hdblind_core::model::ChannelModel {
                length_km: l,
                ..base.channel
            }
            .transmission();
            (l, p.linear.t_hat, t)
        })
        .collect();
    sink.csv("fig5_linear.csv", &["L_km", "t_hat_i", "t_nominal"], &linear)?;

    let ordered: Vec<Value> = lengths
        .iter()
        .map(|&l| {
            let t: Vec<f64> = points
                .iter()
                .filter(|p| p.length_km == l)
                .map(|p| p.clipped.t_hat)
                .collect();
            let nonincreasing = t.windows(2).all(|w| w[1] <= w[0]);
            serde_json::json!({ "L_km": l, "nonincreasing_in_r": nonincreasing })
        })
        .collect();
    sink.json(
        "fig5.json",
        &serde_json::json!({ "ordering": ordered, "points": points }),
    )?;

    let mut chart = Chart::new("Transmission estimate vs distance", "L (km)", "T estimate");
    for &r in &f.ratios {
        let pts = by_r
            .iter()
            .filter(|p| p.r == r)
            .map(|p| (p.length_km, p.clipped.t_hat))
            .collect();
        chart = chart.with(Series::new(format!("R = {r}"), pts, Style::Line));
    }
    chart = chart.with(Series::new(
        "linear",
        linear.iter().map(|r| (r.0, r.1)).collect(),
        Style::Dashed,
    ));
    sink.svg("fig5.svg", &chart.render())
}

#[derive(Serialize)]
struct BreachRow {
    length_km: f64,
    r_star: Option<f64>,
}

fn fig6(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let f = &cfg.fig6;
    if !(f.coarse_step > 0.0) || !(f.fine_step > 0.0) || !(f.fine_max >= f.fine_min) || f.lengths_km.is_empty() {
        return Err(CliError::Config(
            "fig6 needs positive steps, an ordered fine range and at least one length".into(),
        ));
    }
    let base = cfg.scenario()?;
    let coarse_r = grid(0.0, f.coarse_max, f.coarse_step);
    let fine_r = grid(f.fine_min, f.fine_max, f.fine_step);
    let coarse = sweep(&base, &f.lengths_km, &coarse_r, va_policy(cfg))?;
    let fine = sweep(&base, &f.lengths_km, &fine_r, va_policy(cfg))?;

    let columns = ["r", "L_km", "xi_hat_r", "xi_null"];
    let rows = |pts: &[AttackPoint]| -> Vec<(f64, f64, f64, f64)> {
        pts.iter()
            .map(|p| (p.r, p.length_km, p.clipped.xi_hat, p.xi_null()))
            .collect()
    };
    sink.csv("fig6_coarse.csv", &columns, &rows(&coarse))?;
    sink.csv("fig6_fine.csv", &columns, &rows(&fine))?;

    let all: Vec<AttackPoint> = coarse.iter().chain(&fine).copied().collect();
    let breaches: Vec<BreachRow> = f
        .lengths_km
        .iter()
        .map(|&l| BreachRow {
            length_km: l,
            r_star: breach_point(&all, l),
        })
        .collect();
    sink.csv(
        "fig6_breach.csv",
        &["L_km", "r_star"],
        &breaches.iter().map(|b| (b.length_km, b.r_star)).collect::<Vec<_>>(),
    )?;
    let ratios = merge_grids(&coarse_r, &fine_r);
    sink.json(
        "fig6.json",
        &serde_json::json!({ "ratios": ratios, "breach_points": breaches, "coarse": coarse, "fine": fine }),
    )?;

    for (name, pts) in [("coarse", &coarse), ("fine", &fine)] {
        let mut chart = Chart::new(
            &format!("Saturated excess-noise estimate vs R ({name})"),
            "R",
            "xi estimate (SNU)",
        )
        .floor(XI_PLOT_FLOOR);
        for &l in &f.lengths_km {
            let series = pts
                .iter()
                .filter(|p| p.length_km == l)
                .map(|p| (p.r, p.clipped.xi_hat))
                .collect();
            chart = chart.with(Series::new(format!("L = {l} km"), series, Style::Line));
        }
        for l in [f.lengths_km.first(), f.lengths_km.last()].into_iter().flatten() {
            let series = pts
                .iter()
                .filter(|p| p.length_km == *l)
                .map(|p| (p.r, p.xi_null()))
                .collect();
            chart = chart.with(Series::new(format!("xi_null {l} km"), series, Style::Dashed));
        }
        sink.svg(&format!("fig6_{name}.svg"), &chart.render())?;
    }
    Ok(())
}

fn guard(cfg: &RunConfig, sink: &mut Sink) -> Result<()> {
    let g = &cfg.guard;
    let scn = cfg.scenario()?;
    let honest = SimScenario {
        attack: AttackModel {
            active: false,
            ..scn.attack
        },
        ..scn
    };
    let mut attack = scn;
    if !attack.attack.active {
        attack.attack = AttackModel {
            active: true,
            r: R_BREACH,
            ..attack.attack
        };
    }
    let policy = GuardPolicy::new(g.s_lo, g.s_hi, g.max_fraction, &scn.detector)?;
    let mut policies = default_policy_grid(&scn.detector)?;
    if !policies.contains(&policy) {
        policies.push(policy);
    }
    let rows: Vec<RocRow> = roc_sweep(&honest, &attack, &policies, g.blocks, g.block_size)?;
    sink.csv(
        "roc.csv",
        &[
            "s_hi",
            "s_lo",
            "max_fraction",
            "false_alarm",
            "detection",
            "n_blocks",
            "block_size",
        ],
        &rows,
    )?;

    let verdicts = block_verdicts(&honest, &attack, &policy, g.blocks, g.block_size)?;
    let mut vrows = Vec::new();
    for (label, list) in [("honest", &verdicts.honest), ("attack", &verdicts.attack)] {
        vrows.extend(
            list.iter()
                .enumerate()
                .map(|(i, v)| (label, i, v.fraction_outside, v.accept)),
        );
    }
    sink.csv(
        "verdicts.csv",
        &["scenario", "block", "fraction_outside", "accept"],
        &vrows,
    )?;

    let configured = rows
        .iter()
        .find(|r| r.s_hi == policy.s_hi && r.s_lo == policy.s_lo && r.max_fraction == policy.max_fraction);
    sink.json(
        "guard.json",
        &serde_json::json!({ "policy": policy, "attack_r": attack.attack.r, "configured": configured, "roc": rows }),
    )?;
    let chart = Chart::new("Saturation guard ROC", "false-alarm rate", "detection rate").with(Series::new(
        "policies",
        rows.iter().map(|r| (r.false_alarm, r.detection)).collect(),
        Style::Markers,
    ));
    sink.svg("roc.svg", &chart.render())
}

#[derive(Serialize)]
struct RunSummary {
    v_a: f64,
    t_nominal: f64,
    clipping: bool,
    linear: Estimate,
    clipped: Estimate,
    /// Assessment of the estimate Bob actually records.
    key_rate: KeyRateReport,
    breach: bool,
}

fn run_single(cfg: &RunConfig, sink: &mut Sink, dump: bool) -> Result<()> {
    let scn = cfg.scenario()?;
    let m = simulate_moments(&scn)?;
    let linear = hdblind_core::estimate::estimate_channel(&m.linear, &scn.detector, &scn.protocol)?;
    let clipped = hdblind_core::estimate::estimate_channel(&m.clipped, &scn.detector, &scn.protocol)?
        .with_clipped_fraction(m.clipped_fraction());
    let recorded = if scn.clipping { clipped } else { linear };
    let report = hdblind_core::keyrate::assess(&recorded, &scn.protocol, &scn.detector)?;
    let summary = RunSummary {
        v_a: scn.protocol.v_a,
        t_nominal: scn.channel.transmission(),
        clipping: scn.clipping,
        linear,
        clipped,
        breach: hdblind_core::keyrate::breach(&recorded, &report),
        key_rate: report,
    };
    sink.json("run.json", &summary)?;
    if dump {
        let batch = run(&scn)?;
        let rows: Vec<(usize, f64, f64, bool, bool)> = (0..batch.n())
            .map(|i| (i, batch.x_a[i], batch.x_b[i], batch.clipped_hi[i], batch.clipped_lo[i]))
            .collect();
        sink.csv(
            "batch.csv",
            &["pulse_index", "x_a", "x_b", "clipped_hi", "clipped_lo"],
            &rows,
        )?;
    }
    Ok(())
}
