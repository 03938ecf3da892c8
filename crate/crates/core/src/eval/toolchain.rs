//! Evaluation with external simulation and synthesis tools.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::process::{find_executable, run_command, ProcessOutput};
use super::report::{parse_ppa_report, ReportPatterns};
use super::{EnvironmentError, Evaluator};
use crate::error::Error;
use crate::model::{EvalOutcome, IndividualId, PpaMetrics, ProblemSpec};
use crate::prompts::render_template;

/// An executable plus argument templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl StageCommand {
    fn shell(script: &str) -> Self {
        Self {
            program: "sh".into(),
            args: vec!["-c".into(), script.into()],
        }
    }
}

const CODE_FILE: &str = "design.v";
const TESTBENCH_FILE: &str = "tb.v";
const SCRIPT_FILE: &str = "synth.ys";
const STA_SCRIPT_FILE: &str = "sta.tcl";
const REPORT_FILE: &str = "report.txt";
const NETLIST_FILE: &str = "netlist.v";

const DEFAULT_SYNTH_SCRIPT: &str = "\
read_verilog -sv {code_file}
synth -flatten -top {top}
dfflibmap -liberty {liberty}
abc -D {clock_ps} -liberty {liberty}
opt_clean -purge
tee -o {out_report} stat -liberty {liberty}
write_verilog -noattr -noexpr {netlist_file}
";

const DEFAULT_STA_SCRIPT: &str = "\
read_liberty {liberty}
read_verilog {netlist_file}
link_design {top}
if {[llength [get_ports -quiet clk]] > 0} {
  create_clock -name clk -period {clock_ns} [get_ports clk]
} else {
  create_clock -name clk -period {clock_ns}
}
set_input_delay 0 -clock clk [all_inputs]
set_output_delay 0 -clock clk [all_outputs]
report_power
report_worst_slack -max
";

fn default_simulator() -> StageCommand {
    StageCommand::shell("iverilog -g2012 -o sim.vvp {code_file} {testbench_file} && vvp -n sim.vvp")
}
fn default_synthesizer() -> StageCommand {
    StageCommand::shell("yosys -q -l yosys.log -s {script_file} && sta -no_init -no_splash -exit {sta_script_file}")
}
fn default_synth_script() -> String {
    DEFAULT_SYNTH_SCRIPT.to_string()
}
fn default_sta_script() -> String {
    DEFAULT_STA_SCRIPT.to_string()
}
fn default_required() -> Vec<String> {
    ["iverilog", "vvp", "yosys", "sta"].map(String::from).to_vec()
}
fn default_timeout() -> f64 {
    300.0
}
fn default_success_pattern() -> String {
    r"(?i)(all tests passed|your design passed|mismatches:\s*0\s+in\b)".to_string()
}

/// External toolchain settings.
///
/// Command arguments and both scripts may use `{code_file}`,
/// `{testbench_file}`, `{liberty}`, `{clock_ns}`, `{clock_ps}`,
/// `{out_report}`, `{netlist_file}`, `{script_file}`, `{sta_script_file}`,
/// `{top}` and `{workdir}`. Commands run inside a per-individual scratch
/// directory, so file placeholders expand to bare file names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolchainConfig {
    #[serde(default = "default_simulator")]
    pub simulator: StageCommand,
    #[serde(default = "default_synthesizer")]
    pub synthesizer: StageCommand,
    #[serde(default = "default_synth_script")]
    pub synth_script: String,
    #[serde(default = "default_sta_script")]
    pub sta_script: String,
    /// Gate-level re-simulation of `{netlist_file}`; off when absent.
    #[serde(default)]
    pub post_synth_simulator: Option<StageCommand>,
    /// Executables that must be on `PATH` before a run starts.
    #[serde(default = "default_required")]
    pub required_executables: Vec<String>,
    pub liberty_path: PathBuf,
    /// Synthesis clock in ns; the problem's target period when absent.
    #[serde(default)]
    pub clock_period: Option<f64>,
    /// Seconds allowed per tool stage.
    #[serde(default = "default_timeout")]
    pub per_stage_timeout: f64,
    #[serde(default)]
    pub workdir_root: Option<PathBuf>,
    #[serde(default)]
    pub keep_artifacts: bool,
    /// Regex that a passing testbench prints.
    #[serde(default = "default_success_pattern")]
    pub success_pattern: String,
    #[serde(default)]
    pub report: ReportPatterns,
    /// Top module name; the first declared module when absent.
    #[serde(default)]
    pub top_module: Option<String>,
}

impl ToolchainConfig {
    pub fn new(liberty_path: impl Into<PathBuf>) -> Self {
        Self {
            simulator: default_simulator(),
            synthesizer: default_synthesizer(),
            synth_script: default_synth_script(),
            sta_script: default_sta_script(),
            post_synth_simulator: None,
            required_executables: default_required(),
            liberty_path: liberty_path.into(),
            clock_period: None,
            per_stage_timeout: default_timeout(),
            workdir_root: None,
            keep_artifacts: false,
            success_pattern: default_success_pattern(),
            report: ReportPatterns::default(),
            top_module: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(c) = self.clock_period {
            if !(c > 0.0 && c.is_finite()) {
                return Err(format!("toolchain.clock_period must be > 0, got {c}"));
            }
        }
        if !(self.per_stage_timeout > 0.0 && self.per_stage_timeout.is_finite()) {
            return Err(format!(
                "toolchain.per_stage_timeout must be > 0, got {}",
                self.per_stage_timeout
            ));
        }
        Regex::new(&self.success_pattern)
            .map_err(|e| format!("toolchain.success_pattern: {e}"))?;
        Ok(())
    }
}

fn detect_top(code: &str) -> Option<String> {
    let re = Regex::new(r"(?m)^\s*module\s+([A-Za-z_][A-Za-z0-9_$]*)").expect("static regex");
    re.captures(code).map(|c| c[1].to_string())
}

/// A scratch directory that is removed on drop unless kept.
struct Scratch {
    path: PathBuf,
    keep: bool,
    _temp: Option<tempfile::TempDir>,
}

impl Drop for Scratch {
    fn drop(&mut self) {
        if !self.keep && self._temp.is_none() {
            let _ = fs::remove_dir_all(&self.path);
        }
    }
}

pub struct ToolchainEvaluator {
    cfg: ToolchainConfig,
    success: Regex,
}

impl ToolchainEvaluator {
    pub fn new(cfg: ToolchainConfig) -> Result<Self, Error> {
        cfg.validate().map_err(Error::Config)?;
        let success = Regex::new(&cfg.success_pattern).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { cfg, success })
    }

    pub fn config(&self) -> &ToolchainConfig {
        &self.cfg
    }

    fn clock(&self, spec: &ProblemSpec) -> f64 {
        self.cfg.clock_period.unwrap_or(spec.target_clock_period)
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.cfg.per_stage_timeout)
    }

    fn scratch(&self, name: &str) -> Result<Scratch, EnvironmentError> {
        let err = |path: &Path, e: std::io::Error| EnvironmentError::Workdir {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        match &self.cfg.workdir_root {
            Some(root) => {
                let path = root.join(name);
                if path.exists() {
                    fs::remove_dir_all(&path).map_err(|e| err(&path, e))?;
                }
                fs::create_dir_all(&path).map_err(|e| err(&path, e))?;
                Ok(Scratch {
                    path,
                    keep: self.cfg.keep_artifacts,
                    _temp: None,
                })
            }
            None => {
                let tmp = tempfile::Builder::new()
                    .prefix("rtlevo-")
                    .tempdir()
                    .map_err(|e| err(&std::env::temp_dir(), e))?;
                Ok(Scratch {
                    path: tmp.path().to_path_buf(),
                    keep: false,
                    _temp: Some(tmp),
                })
            }
        }
    }

    fn vars(&self, dir: &Path, code: &str, clock: f64) -> Vec<(String, String)> {
        let top = self
            .cfg
            .top_module
            .clone()
            .or_else(|| detect_top(code))
            .unwrap_or_else(|| "top".into());
        vec![
            ("code_file".into(), CODE_FILE.into()),
            ("testbench_file".into(), TESTBENCH_FILE.into()),
            ("liberty".into(), self.cfg.liberty_path.display().to_string()),
            ("clock_ns".into(), format!("{clock}")),
            ("clock_ps".into(), format!("{}", clock * 1000.0)),
            ("out_report".into(), REPORT_FILE.into()),
            ("netlist_file".into(), NETLIST_FILE.into()),
            ("script_file".into(), SCRIPT_FILE.into()),
            ("sta_script_file".into(), STA_SCRIPT_FILE.into()),
            ("top".into(), top),
            ("workdir".into(), dir.display().to_string()),
        ]
    }

    fn run_stage(
        &self,
        cmd: &StageCommand,
        dir: &Path,
        vars: &[(String, String)],
    ) -> Result<ProcessOutput, EnvironmentError> {
        let borrowed: Vec<(String, &str)> = vars.iter().map(|(k, v)| (k.clone(), v.as_str())).collect();
        let args: Vec<String> = cmd.args.iter().map(|a| render_template(a, &borrowed)).collect();
        run_command(&cmd.program, &args, dir, self.timeout())
    }

    fn write(&self, path: &Path, text: &str) -> Result<(), EnvironmentError> {
        fs::write(path, text).map_err(|e| EnvironmentError::Workdir {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    fn passed(&self, out: &ProcessOutput) -> bool {
        out.success() && self.success.is_match(&format!("{}\n{}", out.stdout, out.stderr))
    }

    /// Compiles and runs the design against the problem's testbench.
    pub fn simulate(&self, dir: &Path, code: &str, spec: &ProblemSpec) -> Result<(bool, String), EnvironmentError> {
        self.write(&dir.join(CODE_FILE), code)?;
        self.write(&dir.join(TESTBENCH_FILE), &spec.testbench_source)?;
        let vars = self.vars(dir, code, self.clock(spec));
        let out = self.run_stage(&self.cfg.simulator, dir, &vars)?;
        let passed = self.passed(&out);
        let mut log = out.log();
        if log.trim().is_empty() {
            log = format!("simulator produced no output (exit {:?})", out.status);
        }
        if out.success() && !passed {
            log.push_str("\n[no success token found in simulation output]");
        }
        Ok((passed, log))
    }

    /// Runs the synthesis flow; returns (raw report, succeeded, log).
    pub fn synthesize(&self, dir: &Path, code: &str, clock: f64) -> Result<(String, bool, String), EnvironmentError> {
        self.write(&dir.join(CODE_FILE), code)?;
        let vars = self.vars(dir, code, clock);
        let borrowed: Vec<(String, &str)> = vars.iter().map(|(k, v)| (k.clone(), v.as_str())).collect();
        self.write(&dir.join(SCRIPT_FILE), &render_template(&self.cfg.synth_script, &borrowed))?;
        self.write(&dir.join(STA_SCRIPT_FILE), &render_template(&self.cfg.sta_script, &borrowed))?;
        let _ = fs::remove_file(dir.join(REPORT_FILE));
        let out = self.run_stage(&self.cfg.synthesizer, dir, &vars)?;
        let mut raw = fs::read_to_string(dir.join(REPORT_FILE)).unwrap_or_default();
        raw.push('\n');
        raw.push_str(&out.stdout);
        let mut log = out.log();
        if log.trim().is_empty() {
            log = format!("synthesizer produced no output (exit {:?})", out.status);
        }
        Ok((raw, out.success(), log))
    }

    fn check_executable(name: &str) -> Result<(), EnvironmentError> {
        find_executable(name)
            .map(|_| ())
            .ok_or_else(|| EnvironmentError::MissingExecutable(name.to_string()))
    }
}

impl Evaluator for ToolchainEvaluator {
    fn assess(&self, subject: IndividualId, code: &str, spec: &ProblemSpec) -> Result<EvalOutcome, EnvironmentError> {
        let scratch = self.scratch(&format!("ind-{}", subject.0))?;
        let dir = scratch.path.as_path();
        let (sim_passed, sim_log) = self.simulate(dir, code, spec)?;
        if !sim_passed {
            return Ok(EvalOutcome::sim_failure(sim_log));
        }
        let clock = self.clock(spec);
        let (raw, ran_ok, mut synth_log) = self.synthesize(dir, code, clock)?;
        let ppa = if ran_ok {
            match parse_ppa_report(&raw, &self.cfg.report, clock) {
                Ok(p) => Some(p),
                Err(e) => {
                    synth_log.push_str(&format!("\n[report error: {e}]"));
                    None
                }
            }
        } else {
            None
        };
        let post_synth_functional = match (&self.cfg.post_synth_simulator, &ppa) {
            (Some(cmd), Some(_)) => {
                let vars = self.vars(dir, code, clock);
                let out = self.run_stage(cmd, dir, &vars)?;
                Some(self.passed(&out))
            }
            _ => None,
        };
        Ok(EvalOutcome {
            sim_passed: true,
            synth_succeeded: ppa.is_some(),
            ppa,
            sim_log,
            synth_log,
            post_synth_functional,
        })
    }

    fn reference_ppa(&self, code: &str, spec: &ProblemSpec) -> Result<PpaMetrics, Error> {
        self.check_environment()?;
        let scratch = self.scratch("reference")?;
        let clock = self.clock(spec);
        let (raw, ok, log) = self.synthesize(&scratch.path, code, clock)?;
        if !ok {
            return Err(Error::Ineligible(format!("reference failed to synthesize:\n{log}")));
        }
        let ppa = parse_ppa_report(&raw, &self.cfg.report, clock)?;
        ppa.validate_positive("reference_ppa")
            .map_err(|e| Error::Ineligible(e.to_string()))?;
        Ok(ppa)
    }

    fn check_environment(&self) -> Result<(), EnvironmentError> {
        Self::check_executable(&self.cfg.simulator.program)?;
        Self::check_executable(&self.cfg.synthesizer.program)?;
        if let Some(cmd) = &self.cfg.post_synth_simulator {
            Self::check_executable(&cmd.program)?;
        }
        for exe in &self.cfg.required_executables {
            Self::check_executable(exe)?;
        }
        fs::File::open(&self.cfg.liberty_path).map_err(|e| EnvironmentError::Liberty {
            path: self.cfg.liberty_path.clone(),
            reason: e.to_string(),
        })?;
        if let Some(root) = &self.cfg.workdir_root {
            fs::create_dir_all(root).map_err(|e| EnvironmentError::Workdir {
                path: root.clone(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    fn max_concurrency(&self) -> usize {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}
