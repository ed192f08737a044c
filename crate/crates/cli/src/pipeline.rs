//! The seven pipeline stages and their dependency bookkeeping.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use pgrom::basis::{
    build_left_basis_jacobian, build_left_basis_residual, build_right_basis, collect_left_training, TrainingLog,
};
use pgrom::fom::{run_fom_campaign, stack_trajectories, SnapshotSet, Trajectory};
use pgrom::hrom::run_hrom_campaign;
use pgrom::metrics::{
    measure_speedup, render_comparison_tables, render_snapshot_errors, snapshot_errors, ComparisonReport,
    ComparisonRow, SolverReport, Speedup,
};
use pgrom::rom::{run_rom_campaign, RomTrajectory};
use pgrom::strategy::{rom_solver, train_hyperreduction, CubatureOptions, HyperReducedOperatorSet, Strategy};
use pgrom::testbed::{element_patches, ElementPatch, FeProblem};

use crate::config::ValidConfig;
use crate::error::CliError;
use crate::store::{now_unix_s, sha256_hex, FileRecord, Manifest, OutputState, Store};

pub const STAGES: [&str; 7] = ["fom", "pod", "rom-train", "left-basis", "ecm", "hrom", "compare"];

pub fn stage_name(name: &str) -> Result<&'static str, CliError> {
    STAGES.iter().copied().find(|s| *s == name).ok_or_else(|| {
        CliError::Validation(vec![format!("stage: unknown stage {name:?}; valid stages: {}", STAGES.join(", "))])
    })
}

fn upstream(stage: &str) -> &'static [&'static str] {
    match stage {
        "fom" => &[],
        "pod" => &["fom"],
        "rom-train" => &["pod"],
        "left-basis" => &["rom-train"],
        "ecm" => &["pod", "left-basis"],
        "hrom" => &["pod", "left-basis", "ecm"],
        "compare" => &["fom", "pod", "left-basis", "ecm", "hrom"],
        other => unreachable!("unknown stage {other}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageStatus {
    UpToDate,
    Stale(String),
    Missing,
}

impl std::fmt::Display for StageStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageStatus::UpToDate => f.write_str("up to date"),
            StageStatus::Stale(why) => write!(f, "stale ({why})"),
            StageStatus::Missing => f.write_str("not run"),
        }
    }
}

/// Summary written next to the comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareSummary {
    pub reports: Vec<ComparisonReport>,
    pub speedups: Vec<SpeedupEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedupEntry {
    pub strategy: String,
    pub phase: String,
    pub fom_over_hrom: Speedup,
    pub rom_over_hrom: Speedup,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LeftTrainingSummary {
    jacobian_snapshots: usize,
    residual_snapshots: usize,
    silent_steps: usize,
    lspg: SolverReport,
}

pub struct Pipeline {
    cfg: ValidConfig,
    store: Store,
    problem: Box<dyn FeProblem>,
    patches: Vec<ElementPatch>,
    seed: Option<u64>,
}

fn stacked(problem: &dyn FeProblem, trajectories: &[RomTrajectory]) -> DMatrix<f64> {
    let full: Vec<Trajectory> = trajectories.iter().map(RomTrajectory::to_trajectory).collect();
    stack_trajectories(problem.assembly().free_dofs(), &full).matrix
}

fn report_of(label: String, trajectories: &[RomTrajectory], elapsed: std::time::Duration) -> SolverReport {
    SolverReport::from_traces(label, trajectories.iter().flat_map(|t| t.steps.iter().map(|s| &s.trace)))
        .with_wall_time(elapsed)
}

impl Pipeline {
    pub fn new(cfg: ValidConfig, seed: Option<u64>) -> Result<Self, CliError> {
        let problem = cfg.config.build_problem().map_err(|e| CliError::Validation(vec![format!("problem: {e}")]))?;
        let patches = element_patches(problem.mesh());
        let store = Store::new(cfg.output_dir());
        Ok(Self { cfg, store, problem, patches, seed })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn strategy_names(&self) -> Vec<&'static str> {
        self.cfg.strategies.iter().map(|s| s.name()).collect()
    }

    fn needs(&self, s: Strategy) -> bool {
        self.cfg.strategies.contains(&s)
    }

    /// The part of the configuration a stage depends on.
    fn config_slice(&self, stage: &str) -> serde_json::Value {
        let c = &self.cfg.config;
        let t = &c.tolerances;
        let base = json!({
            "problem": c.problem,
            "training": self.cfg.training,
            "newton": c.newton,
        });
        let extra = match stage {
            "fom" => json!({}),
            "pod" => json!({ "eps_u": t.eps_u }),
            "rom-train" => json!({ "left_training": c.left_training }),
            "left-basis" => json!({
                "eps_psi_j": self.needs(Strategy::PgJacobian).then_some(t.eps_psi_j),
                "eps_r": self.needs(Strategy::PgResidual).then_some(t.eps_r),
            }),
            "ecm" => json!({
                "eps_ecm": t.eps_ecm,
                "cubature_iterates": c.cubature_iterates,
                "strategies": self.strategy_names(),
            }),
            "hrom" => json!({ "strategies": self.strategy_names() }),
            "compare" => json!({ "testing": self.cfg.testing, "strategies": self.strategy_names() }),
            other => unreachable!("unknown stage {other}"),
        };
        match stage {
            "pod" | "left-basis" => extra,
            _ => json!({ "base": base, "extra": extra }),
        }
    }

    fn inputs(&self, stage: &'static str) -> Result<Result<Vec<FileRecord>, String>, CliError> {
        let mut out = Vec::new();
        for up in upstream(stage) {
            match self.store.load_manifest(up)? {
                Some(m) => out.extend(m.outputs),
                None => return Ok(Err(format!("upstream stage {up} has not run"))),
            }
        }
        Ok(Ok(out))
    }

    fn key(&self, stage: &str, config_hash: &str, inputs: &[FileRecord]) -> String {
        let doc = json!({ "stage": stage, "config": config_hash, "inputs": inputs });
        sha256_hex(doc.to_string().as_bytes())
    }

    fn config_hash(&self, stage: &str) -> String {
        sha256_hex(self.config_slice(stage).to_string().as_bytes())
    }

    pub fn status(&self, stage: &'static str) -> Result<StageStatus, CliError> {
        let Some(manifest) = self.store.load_manifest(stage)? else {
            return Ok(StageStatus::Missing);
        };
        let inputs = match self.inputs(stage)? {
            Ok(i) => i,
            Err(why) => return Ok(StageStatus::Stale(why)),
        };
        for record in &inputs {
            match self.store.read_verified(record, stage) {
                Ok(_) => {}
                Err(CliError::MissingArtifact { path, .. }) => {
                    return Ok(StageStatus::Stale(format!("input {} is missing", path.display())))
                }
                Err(e) => return Err(e),
            }
        }
        if manifest.key != self.key(stage, &self.config_hash(stage), &inputs) {
            return Ok(StageStatus::Stale("configuration or inputs changed".into()));
        }
        Ok(match self.store.check_outputs(&manifest)? {
            OutputState::Intact => StageStatus::UpToDate,
            OutputState::Missing(path) => StageStatus::Stale(format!("{} is missing", path.display())),
        })
    }

    /// Runs `stage` unless it is up to date (or `force`); returns whether it ran.
    pub fn run_stage(&self, stage: &'static str, force: bool) -> Result<bool, CliError> {
        if !force && self.status(stage)? == StageStatus::UpToDate {
            eprintln!("{stage}: up to date");
            return Ok(false);
        }
        let inputs = match self.inputs(stage)? {
            Ok(i) => i,
            Err(_) => {
                let up = upstream(stage)
                    .iter()
                    .find(|u| matches!(self.store.load_manifest(u), Ok(None)))
                    .copied()
                    .unwrap_or("?");
                return Err(CliError::MissingArtifact {
                    stage,
                    path: self.store.root().join("manifests").join(format!("{up}.json")),
                });
            }
        };
        for record in &inputs {
            self.store.read_verified(record, stage)?;
        }
        let start = Instant::now();
        let outputs = match stage {
            "fom" => self.fom()?,
            "pod" => self.pod(&inputs)?,
            "rom-train" => self.rom_train(&inputs)?,
            "left-basis" => self.left_basis(&inputs)?,
            "ecm" => self.ecm(&inputs)?,
            "hrom" => self.hrom(&inputs)?,
            "compare" => self.compare(&inputs)?,
            other => unreachable!("unknown stage {other}"),
        };
        let wall = start.elapsed().as_secs_f64();
        let config_hash = self.config_hash(stage);
        let manifest = Manifest {
            stage: stage.to_owned(),
            key: self.key(stage, &config_hash, &inputs),
            config_hash,
            inputs,
            outputs,
            created_unix_s: now_unix_s(),
            wall_time_s: wall,
            seed: self.seed,
        };
        self.store.commit(&manifest)?;
        eprintln!("{stage}: computed in {wall:.2} s");
        Ok(true)
    }

    /// Every stage in order; once one recomputes, all downstream stages do.
    pub fn run_all(&self) -> Result<(), CliError> {
        let mut dirty = false;
        for stage in STAGES {
            dirty |= self.run_stage(stage, dirty)?;
        }
        Ok(())
    }

    fn find<'r>(inputs: &'r [FileRecord], path: &str, stage: &'static str, root: &std::path::Path) -> Result<&'r FileRecord, CliError> {
        inputs
            .iter()
            .find(|r| r.path == path)
            .ok_or_else(|| CliError::MissingArtifact { stage, path: root.join(path) })
    }

    fn input_matrix(&self, inputs: &[FileRecord], path: &str, stage: &'static str) -> Result<DMatrix<f64>, CliError> {
        self.store.read_matrix(Self::find(inputs, path, stage, self.store.root())?, stage)
    }

    fn input_json<T: for<'de> Deserialize<'de>>(&self, inputs: &[FileRecord], path: &str, stage: &'static str) -> Result<T, CliError> {
        self.store.read_json(Self::find(inputs, path, stage, self.store.root())?, stage)
    }

    fn left_basis_for(&self, inputs: &[FileRecord], s: Strategy, stage: &'static str) -> Result<Option<DMatrix<f64>>, CliError> {
        Ok(match s {
            Strategy::PgJacobian => Some(self.input_matrix(inputs, "left-basis/psi_j.prmf", stage)?),
            Strategy::PgResidual => Some(self.input_matrix(inputs, "left-basis/psi_r.prmf", stage)?),
            _ => None,
        })
    }

    fn fom(&self) -> Result<Vec<FileRecord>, CliError> {
        let start = Instant::now();
        let campaign = run_fom_campaign(self.problem.as_ref(), &self.cfg.training, &self.cfg.config.newton)
            .map_err(CliError::stage("fom"))?;
        let report = SolverReport::from_traces("fom", campaign.trajectories.iter().flat_map(|t| &t.traces))
            .with_wall_time(start.elapsed());
        Ok(vec![
            self.store.write_matrix("fom/snapshots.prmf", &campaign.snapshots.matrix)?,
            self.store.write_json("fom/report.json", &report)?,
        ])
    }

    fn pod(&self, inputs: &[FileRecord]) -> Result<Vec<FileRecord>, CliError> {
        let matrix = self.input_matrix(inputs, "fom/snapshots.prmf", "pod")?;
        let snapshots = SnapshotSet { matrix, provenance: Vec::new() };
        let basis = build_right_basis(&snapshots, self.cfg.config.tolerances.eps_u).map_err(CliError::stage("pod"))?;
        let mut log = TrainingLog::default();
        log.record(&snapshots.matrix, &basis);
        Ok(vec![
            self.store.write_matrix("pod/phi.prmf", &basis.matrix)?,
            self.store.write_json("pod/training-log.json", &log)?,
        ])
    }

    fn rom_train(&self, inputs: &[FileRecord]) -> Result<Vec<FileRecord>, CliError> {
        let phi = self.input_matrix(inputs, "pod/phi.prmf", "rom-train")?;
        let start = Instant::now();
        let c = &self.cfg.config;
        let training = collect_left_training(self.problem.as_ref(), &phi, &self.cfg.training, &c.newton, c.left_training)
            .map_err(CliError::stage("rom-train"))?;
        let summary = LeftTrainingSummary {
            jacobian_snapshots: training.s_j.len(),
            residual_snapshots: training.s_r.len(),
            silent_steps: training.silent_steps,
            lspg: report_of("lspg-training".into(), &training.trajectories, start.elapsed()),
        };
        Ok(vec![
            self.store.write_matrix("rom-train/s_j.prmf", &training.s_j.matrix)?,
            self.store.write_matrix("rom-train/s_r.prmf", &training.s_r.matrix)?,
            self.store.write_json("rom-train/summary.json", &summary)?,
        ])
    }

    fn left_basis(&self, inputs: &[FileRecord]) -> Result<Vec<FileRecord>, CliError> {
        let t = &self.cfg.config.tolerances;
        let mut log = TrainingLog::default();
        let mut out = Vec::new();
        if self.needs(Strategy::PgJacobian) {
            let s_j = self.input_matrix(inputs, "rom-train/s_j.prmf", "left-basis")?;
            let psi = build_left_basis_jacobian(&s_j, t.eps_psi_j).map_err(CliError::stage("left-basis"))?;
            log.record(&s_j, &psi);
            out.push(self.store.write_matrix("left-basis/psi_j.prmf", &psi.matrix)?);
        }
        if self.needs(Strategy::PgResidual) {
            let s_r = self.input_matrix(inputs, "rom-train/s_r.prmf", "left-basis")?;
            let psi = build_left_basis_residual(&s_r, t.eps_r)
                .map_err(|e| CliError::stage("left-basis")(e.context("residual left basis")))?;
            log.record(&s_r, &psi);
            out.push(self.store.write_matrix("left-basis/psi_r.prmf", &psi.matrix)?);
        }
        out.push(self.store.write_json("left-basis/training-log.json", &log)?);
        Ok(out)
    }

    fn ecm(&self, inputs: &[FileRecord]) -> Result<Vec<FileRecord>, CliError> {
        let phi = self.input_matrix(inputs, "pod/phi.prmf", "ecm")?;
        let c = &self.cfg.config;
        let options = CubatureOptions { eps_ecm: c.tolerances.eps_ecm, include_iterates: c.cubature_iterates };
        let mut out = Vec::new();
        for &s in &self.cfg.strategies {
            let psi = self.left_basis_for(inputs, s, "ecm")?;
            let ops = train_hyperreduction(
                self.problem.as_ref(),
                s,
                &phi,
                psi.as_ref(),
                &self.cfg.training,
                None,
                &c.newton,
                options,
                &self.patches,
            )
            .map_err(|e| CliError::stage("ecm")(e.context(format!("strategy {s}"))))?;
            out.push(self.store.write_json(&format!("ecm/{s}.json"), &ops)?);
        }
        Ok(out)
    }

    fn run_hrom(
        &self,
        ops: &HyperReducedOperatorSet,
        phi: &DMatrix<f64>,
        psi: Option<&DMatrix<f64>>,
        parameters: &[Vec<f64>],
        stage: &'static str,
    ) -> Result<(DMatrix<f64>, SolverReport), CliError> {
        let problem = self.problem.as_ref();
        let solver = ops.solver(problem, phi, psi, &self.patches).map_err(CliError::stage(stage))?;
        let start = Instant::now();
        let trajs = run_hrom_campaign(problem, &solver, parameters, &self.cfg.config.newton)
            .map_err(|e| CliError::stage(stage)(e.context(format!("strategy {}", ops.strategy))))?;
        let mut report = report_of(format!("{}-hrom", ops.strategy), &trajs, start.elapsed());
        report.quadrature_size = Some(ops.quadrature.len());
        report.complementary_size = ops.complementary.as_ref().map(Vec::len);
        Ok((stacked(problem, &trajs), report))
    }

    fn hrom(&self, inputs: &[FileRecord]) -> Result<Vec<FileRecord>, CliError> {
        let phi = self.input_matrix(inputs, "pod/phi.prmf", "hrom")?;
        let mut out = Vec::new();
        for &s in &self.cfg.strategies {
            let psi = self.left_basis_for(inputs, s, "hrom")?;
            let ops: HyperReducedOperatorSet = self.input_json(inputs, &format!("ecm/{s}.json"), "hrom")?;
            let (snap, report) = self.run_hrom(&ops, &phi, psi.as_ref(), &self.cfg.training, "hrom")?;
            out.push(self.store.write_matrix(&format!("hrom/{s}-train.prmf"), &snap)?);
            out.push(self.store.write_json(&format!("hrom/{s}-report.json"), &report)?);
        }
        Ok(out)
    }

    fn compare(&self, inputs: &[FileRecord]) -> Result<Vec<FileRecord>, CliError> {
        const STAGE: &str = "compare";
        let problem = self.problem.as_ref();
        let newton = &self.cfg.config.newton;
        let phi = self.input_matrix(inputs, "pod/phi.prmf", STAGE)?;
        let mut phases = vec![(
            "train",
            self.cfg.training.clone(),
            self.input_matrix(inputs, "fom/snapshots.prmf", STAGE)?,
            self.input_json::<SolverReport>(inputs, "fom/report.json", STAGE)?,
        )];
        if !self.cfg.testing.is_empty() {
            let start = Instant::now();
            let campaign = run_fom_campaign(problem, &self.cfg.testing, newton)
                .map_err(|e| CliError::stage(STAGE)(e.context("test-parameter FOM")))?;
            let report = SolverReport::from_traces("fom", campaign.trajectories.iter().flat_map(|t| &t.traces))
                .with_wall_time(start.elapsed());
            phases.push(("test", self.cfg.testing.clone(), campaign.snapshots.matrix, report));
        }

        let mut reports = Vec::new();
        let mut speedups = Vec::new();
        let mut out = Vec::new();
        for (phase, params, fom, fom_report) in &phases {
            for &s in &self.cfg.strategies {
                let psi = self.left_basis_for(inputs, s, STAGE)?;
                let solver = rom_solver(s, &phi, psi.as_ref()).map_err(CliError::stage(STAGE))?;
                let start = Instant::now();
                let rom_trajs = run_rom_campaign(problem, &solver, params, newton)
                    .map_err(|e| CliError::stage(STAGE)(e.context(format!("{s} ROM, {phase} parameters"))))?;
                let rom_report = report_of(format!("{s}-rom"), &rom_trajs, start.elapsed());
                let rom = stacked(problem, &rom_trajs);
                let (hrom, hrom_report) = if *phase == "train" {
                    (
                        self.input_matrix(inputs, &format!("hrom/{s}-train.prmf"), STAGE)?,
                        self.input_json(inputs, &format!("hrom/{s}-report.json"), STAGE)?,
                    )
                } else {
                    let ops: HyperReducedOperatorSet = self.input_json(inputs, &format!("ecm/{s}.json"), STAGE)?;
                    self.run_hrom(&ops, &phi, psi.as_ref(), params, STAGE)?
                };
                let row = ComparisonRow::from_snapshots(s.name(), "u", *phase, fom, &rom, &hrom)
                    .map_err(CliError::stage(STAGE))?;
                let errors_rom = snapshot_errors(&rom, fom).map_err(CliError::stage(STAGE))?;
                let errors_hrom = snapshot_errors(&hrom, fom).map_err(CliError::stage(STAGE))?;
                out.push(self.store.write_bytes(
                    &format!("compare/snapshot-errors/{s}-{phase}-rom.csv"),
                    render_snapshot_errors(&errors_rom).as_bytes(),
                )?);
                out.push(self.store.write_bytes(
                    &format!("compare/snapshot-errors/{s}-{phase}-hrom.csv"),
                    render_snapshot_errors(&errors_hrom).as_bytes(),
                )?);
                speedups.push(SpeedupEntry {
                    strategy: s.name().into(),
                    phase: phase.to_string(),
                    fom_over_hrom: measure_speedup(fom_report, &hrom_report).map_err(CliError::stage(STAGE))?,
                    rom_over_hrom: measure_speedup(&rom_report, &hrom_report).map_err(CliError::stage(STAGE))?,
                });
                reports.push(ComparisonReport {
                    row,
                    snapshot_errors_rom: errors_rom,
                    snapshot_errors_hrom: errors_hrom,
                    fom: fom_report.clone(),
                    rom: rom_report,
                    hrom: hrom_report,
                });
            }
        }
        let rows: Vec<ComparisonRow> = reports.iter().map(|r| r.row.clone()).collect();
        let table = render_comparison_tables(&rows).map_err(CliError::stage(STAGE))?;
        out.insert(0, self.store.write_bytes("compare/comparison.csv", table.as_bytes())?);
        out.push(self.store.write_json("compare/report.json", &CompareSummary { reports, speedups })?);
        Ok(out)
    }

    /// One line per stage with its status and outputs.
    pub fn list_artifacts(&self) -> Result<String, CliError> {
        let mut text = String::new();
        for stage in STAGES {
            let status = self.status(stage)?;
            text.push_str(&format!("{stage}: {status}\n"));
            if let Some(m) = self.store.load_manifest(stage)? {
                for r in &m.outputs {
                    text.push_str(&format!("  {}  {}  {} bytes\n", r.sha256, r.path, r.bytes));
                }
            }
        }
        Ok(text)
    }
}
