//! Executes one scenario and writes its run directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use crate::ade_solver::{assemble_system, Forcing, NoForcing, Probe, SolverConfig, SteppingOperator};
use crate::conv_oracle::{ConvSolver, ConvState};
use crate::discretization::{build_grid, build_ops, DiscreteOps, Grid};
use crate::harness::compare::compare_study;
use crate::harness::config::{
    CheckSpec, ConfigError, ConvSpec, InitialSpec, LoadedScenario, Mode, PermeabilitySpec,
};
use crate::harness::mms::{mms_study, stationary_drift, MmsCase};
use crate::harness::transfer::{transfer_study, write_transfer_csv, TransferOptions, RESOLUTION_LIMIT};
use crate::material::{
    assemble_material_law, c_min, convolution_form_margin, wellposedness_of_law, MaterialLaw,
    MaterialParams,
};
use crate::permeability::{
    fit_series, logspace, read_samples_file, FitOptions, PermeabilitySeries,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub out_dir: PathBuf,
    pub summary: Value,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
}

/// Loads `config`, runs `mode` and writes all artifacts to `out_dir`.
pub fn run_scenario(mode: Mode, config: &Path, out_dir: &Path) -> Result<RunRecord, HarnessError> {
    let loaded = LoadedScenario::load(config)?;
    run_loaded(mode, &loaded, out_dir)
}

pub fn run_loaded(mode: Mode, loaded: &LoadedScenario, out_dir: &Path) -> Result<RunRecord, HarnessError> {
    if let Some(m) = loaded.scenario.mode {
        if m != mode {
            return Err(loaded
                .error_at("mode", format!("config is for mode {}, not {}", m.name(), mode.name()))
                .into());
        }
    }
    std::fs::create_dir_all(out_dir).map_err(runtime)?;
    let echo = serde_json::to_string_pretty(&loaded.echo(mode)).map_err(runtime)?;
    std::fs::write(out_dir.join("config.json"), echo).map_err(runtime)?;
    let mut ctx = Context {
        loaded,
        out: out_dir,
        lines: Vec::new(),
    };
    let mut summary = match mode {
        Mode::Fit => ctx.fit()?,
        Mode::Check => ctx.check()?,
        Mode::RunAde => ctx.run_ade()?,
        Mode::RunConv => ctx.run_conv()?,
        Mode::Compare => ctx.compare()?,
        Mode::Mms => ctx.mms()?,
        Mode::Transfer => ctx.transfer()?,
    };
    summary["mode"] = json!(mode.name());
    ctx.write_json("summary.json", &summary)?;
    Ok(RunRecord {
        out_dir: out_dir.to_path_buf(),
        summary,
        lines: ctx.lines,
    })
}

struct Context<'a> {
    loaded: &'a LoadedScenario,
    out: &'a Path,
    lines: Vec<String>,
}

impl Context<'_> {
    fn missing(&self, block: &str) -> HarnessError {
        self.loaded
            .error_at(block, format!("this mode needs a \"{block}\" block"))
            .into()
    }

    fn invalid(&self, key: &str, e: impl std::fmt::Display) -> HarnessError {
        self.loaded.error_at(key, e.to_string()).into()
    }

    fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(value).map_err(runtime)?;
        std::fs::write(self.out.join(name), text + "\n").map_err(runtime)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, HarnessError> {
        Ok(BufWriter::new(File::create(self.out.join(name)).map_err(runtime)?))
    }

    fn material(&self) -> Result<MaterialParams, HarnessError> {
        let m = self
            .loaded
            .scenario
            .material
            .clone()
            .ok_or_else(|| self.missing("material"))?;
        m.validate().map_err(|e| self.invalid("material", e))?;
        Ok(m)
    }

    fn series(&mut self, params: Option<&MaterialParams>) -> Result<PermeabilitySeries, HarnessError> {
        let spec = self
            .loaded
            .scenario
            .permeability
            .clone()
            .ok_or_else(|| self.missing("permeability"))?;
        match spec {
            PermeabilitySpec::Terms(terms) => {
                let params = params.ok_or_else(|| self.missing("material"))?;
                PermeabilitySeries::from_material(params, terms).map_err(|e| self.invalid("terms", e))
            }
            PermeabilitySpec::Series(path) => {
                let text = std::fs::read_to_string(self.loaded.resolve(&path))
                    .map_err(|e| self.invalid("series", format!("{}: {e}", path.display())))?;
                PermeabilitySeries::from_json(&text).map_err(|e| self.invalid("series", e))
            }
            PermeabilitySpec::Fit(_) => Ok(self.fit_report(params)?.0),
        }
    }

    fn fit_report(
        &mut self,
        params: Option<&MaterialParams>,
    ) -> Result<(PermeabilitySeries, f64, usize), HarnessError> {
        let Some(PermeabilitySpec::Fit(spec)) = self.loaded.scenario.permeability.clone() else {
            return Err(self.invalid("permeability", "fit mode needs a \"fit\" permeability block"));
        };
        let samples = read_samples_file(&self.loaded.resolve(&spec.samples))
            .map_err(|e| self.invalid("samples", format!("{}: {e}", spec.samples.display())))?;
        let mut opts = FitOptions {
            static_limit: spec.static_limit,
            max_iterations: spec.max_iterations,
            tolerance: spec.tolerance,
            ..FitOptions::default()
        };
        if let Some(p) = params {
            opts.eta_k = p.eta_k();
            opts.formation_factor = p.formation_factor();
        }
        let report = fit_series(&samples, spec.n, &opts).map_err(runtime)?;
        self.lines.push(format!(
            "fitted {} terms to {} samples: residual {:.3e} after {} iterations",
            spec.n,
            samples.len(),
            report.residual,
            report.iterations
        ));
        Ok((report.series, report.residual, report.iterations))
    }

    fn grid(&self) -> Result<(Grid, DiscreteOps), HarnessError> {
        let g = self
            .loaded
            .scenario
            .grid
            .as_ref()
            .ok_or_else(|| self.missing("grid"))?;
        let grid = build_grid(g.dim, &g.extents, &g.cells).map_err(|e| self.invalid("grid", e))?;
        let ops = build_ops(&grid);
        if g.export_operators {
            ops.export_triplets(&self.out.join("operators")).map_err(runtime)?;
        }
        Ok((grid, ops))
    }

    fn solver(&self) -> Result<SolverConfig, HarnessError> {
        let cfg = self.loaded.scenario.solver.ok_or_else(|| self.missing("solver"))?;
        cfg.validate().map_err(|e| self.invalid("solver", e))?;
        Ok(cfg)
    }

    fn law(&self, params: &MaterialParams, series: &PermeabilitySeries, dim: usize) -> Result<MaterialLaw, HarnessError> {
        assemble_material_law(params, series, dim).map_err(|e| self.invalid("elasticity", e))
    }

    fn forcing(&self) -> Box<dyn Forcing> {
        match &self.loaded.scenario.forcing {
            Some(f) => Box::new(f.clone()),
            None => Box::new(NoForcing),
        }
    }

    fn probes(&self) -> Vec<Probe> {
        self.loaded.scenario.probes.clone().unwrap_or_else(Probe::defaults)
    }

    fn initial(&self) -> InitialSpec {
        self.loaded.scenario.initial.clone().unwrap_or_default()
    }

    fn fit(&mut self) -> Result<Value, HarnessError> {
        let params = match &self.loaded.scenario.material {
            Some(_) => Some(self.material()?),
            None => None,
        };
        let (series, residual, iterations) = self.fit_report(params.as_ref())?;
        std::fs::write(self.out.join("series.json"), series.to_json().map_err(runtime)? + "\n")
            .map_err(runtime)?;
        Ok(json!({
            "residual": residual,
            "iterations": iterations,
            "series": series,
        }))
    }

    fn check(&mut self) -> Result<Value, HarnessError> {
        let params = self.material()?;
        let series = self.series(Some(&params))?;
        let spec = self.loaded.scenario.check.clone().unwrap_or_default();
        let CheckSpec {
            nu0,
            relaxation_bound,
            convolution_margin_at,
        } = spec;
        if !(nu0.is_finite() && nu0 > 0.0) {
            return Err(self.invalid("nu0", format!("nu0 must be positive, got {nu0}")));
        }
        let dim = self.loaded.scenario.grid.as_ref().map_or(1, |g| g.dim);
        let law = self.law(&params, &series, dim)?;
        let report = wellposedness_of_law(&law, nu0);
        let mut advisories = Vec::new();
        if let Some(bound) = relaxation_bound {
            for j in series.relaxation_bound_violations(bound) {
                advisories.push(format!(
                    "term {}: relaxation time {} is not below the bound {bound}",
                    j + 1,
                    series.terms()[j].c
                ));
            }
        }
        let margins: Vec<Value> = convolution_margin_at
            .iter()
            .map(|&m| json!({"m": m, "margin": convolution_form_margin(&params, &series, nu0, m)}))
            .collect();
        let doc = json!({
            "report": report,
            "series": series,
            "advisories": advisories,
            "convolution_form_margins": margins,
        });
        self.write_json("report.json", &doc)?;
        self.lines.extend(report.to_string().lines().map(String::from));
        self.lines.extend(advisories.iter().map(|a| format!("warning: {a}")));
        Ok(json!({
            "holds": report.holds,
            "c_min": report.c_min,
            "nu0": nu0,
            "m0_positive_definite": report.m0_positive_definite,
        }))
    }

    fn setup(&mut self) -> Result<Setup, HarnessError> {
        let params = self.material()?;
        let series = self.series(Some(&params))?;
        let (grid, ops) = self.grid()?;
        let law = self.law(&params, &series, grid.dim())?;
        let cfg = self.solver()?;
        Ok(Setup {
            series,
            grid,
            ops,
            law,
            cfg,
        })
    }

    fn run_ade(&mut self) -> Result<Value, HarnessError> {
        let s = self.setup()?;
        let stepper = assemble_system(&s.law, &s.ops, &s.cfg).map_err(runtime)?;
        let initial = self.initial().build(&stepper, s.grid.extents());
        let forcing = self.forcing();
        let probes = self.probes();
        let nu0 = self.loaded.scenario.check.as_ref().map(|c| c.nu0);
        let e0 = stepper.energy(&initial.state);
        let out = stepper
            .run_observed(&initial, forcing.as_ref(), &probes, nu0, |_, _, _| {})
            .map_err(runtime)?;
        out.trajectory.write_csv(self.create("trajectory.csv")?).map_err(runtime)?;
        let t_end = out.trajectory.times.last().copied().unwrap_or(0.0);
        stepper
            .write_state(self.out, "final_state", t_end, &out.final_state, &out.displacement)
            .map_err(runtime)?;
        let mut summary = json!({
            "steps": out.trajectory.len(),
            "t_final": t_end,
            "initial_energy": e0,
            "final_energy": stepper.energy(&out.final_state),
            "final_probes": final_probes(&out.trajectory.columns, out.trajectory.rows.last()),
        });
        if let (Some(m), Some(nu)) = (&out.monitor, nu0) {
            let cm = c_min(&s.law, nu);
            summary["stability"] = json!({"nu": nu, "c_min": cm, "ratio": m.ratio(cm)});
        }
        self.lines.push(format!(
            "{} steps to t = {t_end}; energy {e0:.6e} -> {:.6e}",
            out.trajectory.len(),
            stepper.energy(&out.final_state)
        ));
        Ok(summary)
    }

    fn conv_spec(&self) -> ConvSpec {
        self.loaded.scenario.conv.clone().unwrap_or_default()
    }

    fn run_conv(&mut self) -> Result<Value, HarnessError> {
        let s = self.setup()?;
        let spec = self.conv_spec();
        let stepper = assemble_system(&s.law, &s.ops, &s.cfg).map_err(runtime)?;
        let initial = self.initial().build(&stepper, s.grid.extents());
        let forcing = self.forcing();
        let probes = self.probes();
        let solver = ConvSolver::with_acceleration(&s.law, &s.series, &s.ops, &s.cfg, spec.blowup, spec.acceleration)
            .map_err(runtime)?;
        let out = solver.run(&initial, forcing.as_ref(), &probes).map_err(runtime)?;
        out.trajectory.write_csv(self.create("trajectory.csv")?).map_err(runtime)?;
        let t_end = out.trajectory.times.last().copied().unwrap_or(0.0);
        write_conv_state(self.out, t_end, &out.final_state, &s.ops)?;
        self.lines.push(format!("{} steps to t = {t_end}", out.trajectory.len()));
        Ok(json!({
            "steps": out.trajectory.len(),
            "t_final": t_end,
            "final_energy": solver.energy(&out.final_state),
            "final_probes": final_probes(&out.trajectory.columns, out.trajectory.rows.last()),
        }))
    }

    fn compare(&mut self) -> Result<Value, HarnessError> {
        let s = self.setup()?;
        let spec = self
            .loaded
            .scenario
            .compare
            .clone()
            .ok_or_else(|| self.missing("compare"))?;
        if spec.dts.len() < 3 {
            return Err(self.invalid("dts", "a refinement study needs at least 3 step sizes"));
        }
        for &dt in &spec.dts {
            SolverConfig { dt, ..s.cfg }
                .validate()
                .map_err(|e| self.invalid("dts", e))?;
        }
        let conv = self.conv_spec();
        let init = self.initial();
        let extents = s.grid.extents().to_vec();
        let forcing = self.forcing();
        let report = compare_study(
            &s.law,
            &s.series,
            &s.ops,
            &s.cfg,
            &spec.dts,
            &|st: &SteppingOperator| init.build(st, &extents),
            forcing.as_ref(),
            conv.acceleration,
            conv.blowup,
        )
        .map_err(runtime)?;
        report.write_csv(self.create("convergence.csv")?).map_err(runtime)?;
        for l in &report.levels {
            self.lines.push(format!("dt {:<12} max_diff {:.6e}", l.dt, l.max_diff));
        }
        self.lines.push(format!("observed order {:.3}", report.observed_order));
        Ok(serde_json::to_value(&report).map_err(runtime)?)
    }

    fn mms(&mut self) -> Result<Value, HarnessError> {
        let params = self.material()?;
        let series = self.series(Some(&params))?;
        let spec = self.loaded.scenario.mms.clone().ok_or_else(|| self.missing("mms"))?;
        let g = self
            .loaded
            .scenario
            .grid
            .clone()
            .ok_or_else(|| self.missing("grid"))?;
        let law = self.law(&params, &series, g.dim)?;
        if spec.stationary {
            let case = MmsCase::stationary(g.dim, series.len(), &g.extents);
            let level = spec.levels.first().ok_or_else(|| self.invalid("levels", "at least one level is needed"))?;
            let steps = ((spec.t_final / level.dt).round() as usize).max(1);
            let drift = stationary_drift(&case, &law, &g.extents, level, spec.theta, steps).map_err(runtime)?;
            self.lines.push(format!("relative drift of the stationary state: {drift:.3e}"));
            return Ok(json!({"stationary": true, "relative_drift": drift, "steps": steps}));
        }
        if spec.levels.len() < 3 {
            return Err(self.invalid("levels", "a refinement study needs at least 3 levels"));
        }
        let case = MmsCase::smooth(g.dim, series.len(), &g.extents);
        let table = mms_study(&case, &law, &g.extents, &spec.levels, spec.theta, spec.t_final)
            .map_err(|e| match e {
                crate::ade_solver::SolverError::InvalidConfig(m) => self.invalid("mms", m),
                other => runtime(other),
            })?;
        table.write_csv(self.create("convergence.csv")?).map_err(runtime)?;
        for r in &table.rows {
            self.lines.push(format!(
                "h {:<10.4e} dt {:<10.4e} error {:.6e}{}",
                r.h,
                r.dt,
                r.error,
                r.order.map_or(String::new(), |o| format!("  order {o:.3}"))
            ));
        }
        Ok(json!({"rows": table.rows, "orders": table.orders()}))
    }

    fn transfer(&mut self) -> Result<Value, HarnessError> {
        let params = match &self.loaded.scenario.material {
            Some(_) => Some(self.material()?),
            None => None,
        };
        let series = self.series(params.as_ref())?;
        let spec = self
            .loaded
            .scenario
            .transfer
            .clone()
            .ok_or_else(|| self.missing("transfer"))?;
        let mut omegas = spec.omegas.clone();
        if let Some(r) = spec.range {
            if !(r.from > 0.0 && r.to > r.from && r.count >= 2) {
                return Err(self.invalid("range", "range needs 0 < from < to and count >= 2"));
            }
            omegas.extend(logspace(r.from, r.to, r.count));
        }
        if omegas.is_empty() {
            return Err(self.invalid("transfer", "no frequencies requested"));
        }
        if let Some(bad) = omegas.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(self.invalid("omegas", format!("frequency must be non-negative, got {bad}")));
        }
        if !(0.5..=1.0).contains(&spec.theta) {
            return Err(self.invalid("theta", format!("theta must lie in [0.5, 1], got {}", spec.theta)));
        }
        if let Some(dt) = spec.dt {
            let worst = omegas.iter().fold(0.0f64, |a, w| a.max(*w));
            if !(dt > 0.0) || worst * dt > RESOLUTION_LIMIT {
                return Err(self.invalid(
                    "dt",
                    format!("omega * dt = {:.3e} exceeds {RESOLUTION_LIMIT}", worst * dt),
                ));
            }
        }
        if !(spec.omega_dt > 0.0 && spec.omega_dt <= RESOLUTION_LIMIT) {
            return Err(self.invalid("omega_dt", format!("omega_dt must lie in (0, {RESOLUTION_LIMIT}]")));
        }
        let opts = TransferOptions {
            dt: spec.dt,
            omega_dt: spec.omega_dt,
            theta: spec.theta,
            ..TransferOptions::default()
        };
        let rows = transfer_study(&series, &omegas, &opts).map_err(runtime)?;
        write_transfer_csv(&rows, self.create("transfer.csv")?).map_err(runtime)?;
        let max_rel_err = rows.iter().fold(0.0f64, |a, r| a.max(r.rel_err));
        for r in &rows {
            self.lines.push(format!("omega {:<12.4e} rel_err {:.3e}", r.omega, r.rel_err));
        }
        Ok(json!({"frequencies": rows.len(), "max_rel_err": max_rel_err, "rows": rows}))
    }
}

struct Setup {
    series: PermeabilitySeries,
    grid: Grid,
    ops: DiscreteOps,
    law: MaterialLaw,
    cfg: SolverConfig,
}

fn final_probes(columns: &[String], row: Option<&Vec<f64>>) -> Value {
    let mut m = serde_json::Map::new();
    if let Some(row) = row {
        for (c, v) in columns.iter().zip(row) {
            m.insert(c.clone(), json!(v));
        }
    }
    Value::Object(m)
}

fn write_conv_state(dir: &Path, t: f64, s: &ConvState, ops: &DiscreteOps) -> Result<(), HarnessError> {
    let mut text = String::new();
    let blocks = [("v", &s.v, "m/s"), ("u", &s.u, "m"), ("p", &s.p, "Pa"), ("phi", &s.phi, "m/s")];
    let mut layout = Vec::new();
    let mut offset = 0;
    for (name, values, unit) in blocks {
        for v in values.iter() {
            text.push_str(&v.to_string());
            text.push('\n');
        }
        let space = match name {
            "p" => &ops.pressure,
            "phi" => &ops.flux,
            _ => &ops.velocity,
        };
        layout.push(json!({
            "name": name,
            "offset": offset,
            "len": values.len(),
            "unit": unit,
            "positions": space.positions,
            "component": space.component,
        }));
        offset += values.len();
    }
    std::fs::write(dir.join("final_state.txt"), text).map_err(runtime)?;
    let sidecar = json!({
        "format": "text, one value per line",
        "time": t,
        "dim": ops.dim,
        "length": offset,
        "blocks": layout,
    });
    std::fs::write(
        dir.join("final_state.json"),
        serde_json::to_string_pretty(&sidecar).map_err(runtime)?,
    )
    .map_err(runtime)
}
