//! Subprocess backend.
//!
//! The benchmark program receives configuration values through `{name}`
//! placeholders in its command template and reports each run's time as a
//! line `TUNE_TIME_MS <float>` on standard output. The template is split
//! into words shell-style but never run through a shell.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{Backend, MeasureError, MeasurementProtocol, Observation, Status};
use crate::paramspace::{Configuration, SearchSpace};

pub const TIME_MARKER: &str = "TUNE_TIME_MS";

/// How to build and run a benchmark program.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandSpec {
    /// Run command, e.g. `./bench --bx {block_size_x}`.
    pub template: String,
    /// Optional build command run once per configuration before any run.
    #[serde(default)]
    pub compile_template: Option<String>,
    #[serde(default)]
    pub working_dir: Option<PathBuf>,
    /// Environment of the child processes. `PATH` is inherited unless set here.
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    /// Allow templates without placeholders.
    #[serde(default)]
    pub parameterless: bool,
    /// The program performs warmup and benchmark repetitions itself and
    /// prints one time line per repetition; it is launched once.
    #[serde(default)]
    pub self_repeating: bool,
    /// Recorded as the cache's device name.
    #[serde(default)]
    pub device_name: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CommandBackend {
    spec: CommandSpec,
    space: SearchSpace,
    run_words: Vec<String>,
    compile_words: Option<Vec<String>>,
}

fn placeholders(word: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = word;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start + 1..].find('}') else {
            break;
        };
        out.push(&rest[start + 1..start + 1 + len]);
        rest = &rest[start + 1 + len + 1..];
    }
    out
}

fn split_template(
    template: &str,
    space: &SearchSpace,
) -> Result<(Vec<String>, usize), MeasureError> {
    let words = shell_words::split(template)
        .map_err(|e| MeasureError::Template(format!("`{template}`: {e}")))?;
    if words.is_empty() {
        return Err(MeasureError::Template("empty command".into()));
    }
    let mut count = 0;
    for w in &words {
        for name in placeholders(w) {
            if space.param_index(name).is_none() {
                return Err(MeasureError::Template(format!(
                    "placeholder `{{{name}}}` does not name a parameter"
                )));
            }
            count += 1;
        }
    }
    Ok((words, count))
}

impl CommandBackend {
    pub fn new(spec: CommandSpec, space: SearchSpace) -> Result<Self, MeasureError> {
        let (run_words, n_run) = split_template(&spec.template, &space)?;
        let (compile_words, n_compile) = match &spec.compile_template {
            Some(t) => {
                let (w, n) = split_template(t, &space)?;
                (Some(w), n)
            }
            None => (None, 0),
        };
        if n_run + n_compile == 0 && !spec.parameterless && !space.params().is_empty() {
            return Err(MeasureError::Template(
                "template has no `{param}` placeholder; mark it parameterless if intended".into(),
            ));
        }
        Ok(Self {
            spec,
            space,
            run_words,
            compile_words,
        })
    }

    pub fn spec(&self) -> &CommandSpec {
        &self.spec
    }

    /// Argument vector of the run command for `config`.
    pub fn render(&self, config: &Configuration) -> Vec<String> {
        self.substitute(&self.run_words, config)
    }

    fn substitute(&self, words: &[String], config: &Configuration) -> Vec<String> {
        words
            .iter()
            .map(|w| {
                let mut out = w.clone();
                for name in placeholders(w) {
                    if let Some(i) = self.space.param_index(name) {
                        out = out.replace(&format!("{{{name}}}"), &config.values()[i].to_string());
                    }
                }
                out
            })
            .collect()
    }

    fn launch(&self, argv: &[String], timeout: Duration) -> Launch {
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .env_clear()
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if !self.spec.env.contains_key("PATH") {
            if let Some(path) = std::env::var_os("PATH") {
                cmd.env("PATH", path);
            }
        }
        cmd.envs(&self.spec.env);
        if let Some(dir) = &self.spec.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => return Launch::SpawnFailed(format!("{}: {e}", argv[0])),
        };
        let stdout = child.stdout.take().map(|mut s| {
            std::thread::spawn(move || {
                let mut buf = String::new();
                let _ = s.read_to_string(&mut buf);
                buf
            })
        });
        let stderr = child.stderr.take().map(|mut s| {
            std::thread::spawn(move || {
                let mut buf = String::new();
                let _ = s.read_to_string(&mut buf);
                buf
            })
        });
        let status = match child.wait_timeout(timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Launch::TimedOut;
            }
            Err(e) => return Launch::SpawnFailed(e.to_string()),
        };
        let stdout = stdout.and_then(|h| h.join().ok()).unwrap_or_default();
        let stderr = stderr.and_then(|h| h.join().ok()).unwrap_or_default();
        if status.success() {
            Launch::Exited { stdout }
        } else {
            let tail: String = stderr
                .lines()
                .last()
                .unwrap_or("")
                .chars()
                .take(200)
                .collect();
            Launch::Failed(format!("{} exited with {status}: {tail}", argv[0]))
        }
    }

    /// Run the measurement protocol for one configuration.
    pub fn execute(
        &self,
        config: &Configuration,
        protocol: &MeasurementProtocol,
    ) -> Result<Observation, MeasureError> {
        protocol.validate()?;
        let timeout = Duration::from_millis(protocol.timeout_ms);
        let fail = |status, msg: String| Ok(Observation::failed(config.clone(), status, Some(msg)));

        if let Some(words) = &self.compile_words {
            match self.launch(&self.substitute(words, config), timeout) {
                Launch::Exited { .. } => {}
                Launch::TimedOut => return fail(Status::Timeout, "compile step timed out".into()),
                Launch::Failed(m) | Launch::SpawnFailed(m) => {
                    return fail(Status::CompileFailed, m)
                }
            }
        }

        let argv = self.render(config);
        let warmup = protocol.warmup_runs as usize;
        let runs = protocol.benchmark_runs as usize;
        let mut times = Vec::with_capacity(runs);

        if self.spec.self_repeating {
            let stdout = match self.launch(&argv, timeout) {
                Launch::Exited { stdout } => stdout,
                Launch::TimedOut => return fail(Status::Timeout, "run timed out".into()),
                Launch::Failed(m) | Launch::SpawnFailed(m) => {
                    return fail(Status::RuntimeFailed, m)
                }
            };
            let all = match parse_times(&stdout) {
                Ok(t) => t,
                Err(m) => return fail(Status::RuntimeFailed, m),
            };
            if all.len() < warmup + runs {
                return fail(
                    Status::RuntimeFailed,
                    format!(
                        "expected {} `{TIME_MARKER}` lines, found {}",
                        warmup + runs,
                        all.len()
                    ),
                );
            }
            times.extend_from_slice(&all[warmup..warmup + runs]);
        } else {
            for run in 0..warmup + runs {
                let stdout = match self.launch(&argv, timeout) {
                    Launch::Exited { stdout } => stdout,
                    Launch::TimedOut => {
                        return fail(Status::Timeout, format!("run {run} timed out"))
                    }
                    Launch::Failed(m) | Launch::SpawnFailed(m) => {
                        return fail(Status::RuntimeFailed, m)
                    }
                };
                let reported = match parse_times(&stdout) {
                    Ok(t) => t,
                    Err(m) => return fail(Status::RuntimeFailed, m),
                };
                let Some(&last) = reported.last() else {
                    return fail(
                        Status::RuntimeFailed,
                        format!("run {run} printed no `{TIME_MARKER}` line"),
                    );
                };
                if run >= warmup {
                    times.push(last);
                }
            }
        }

        if let Some(bad) = times.iter().find(|t| !t.is_finite() || **t <= 0.0) {
            return fail(
                Status::RuntimeFailed,
                format!("reported non-positive time {bad}"),
            );
        }
        let time = protocol
            .aggregate
            .apply(&times)
            .expect("benchmark_runs >= 1");
        let metric = self.space.compute_metric(time, config)?;
        Ok(Observation::ok(config.clone(), times, time, metric))
    }
}

enum Launch {
    Exited { stdout: String },
    Failed(String),
    SpawnFailed(String),
    TimedOut,
}

/// Every `TUNE_TIME_MS <float>` line of a program's output.
pub(crate) fn parse_times(stdout: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for line in stdout.lines() {
        let line = line.trim();
        let Some(rest) = line.strip_prefix(TIME_MARKER) else {
            continue;
        };
        let value = rest.trim();
        match value.parse::<f64>() {
            Ok(v) if !rest.is_empty() && rest.starts_with(char::is_whitespace) => out.push(v),
            _ => return Err(format!("garbled time line `{line}`")),
        }
    }
    Ok(out)
}

impl Backend for CommandBackend {
    fn measure(
        &mut self,
        config: &Configuration,
        protocol: &MeasurementProtocol,
    ) -> Result<Observation, MeasureError> {
        self.execute(config, protocol)
    }

    fn describe(&self) -> String {
        format!("command:{}", self.spec.template)
    }

    fn device_name(&self) -> String {
        self.spec
            .device_name
            .clone()
            .unwrap_or_else(|| "local".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_placeholders() {
        assert_eq!(
            placeholders("--bx={block_size_x}x{y}"),
            vec!["block_size_x", "y"]
        );
        assert!(placeholders("plain").is_empty());
    }

    #[test]
    fn parses_time_lines() {
        assert_eq!(
            parse_times("hello\nTUNE_TIME_MS 2.5\nTUNE_TIME_MS 1e-1\n"),
            Ok(vec![2.5, 0.1])
        );
        assert!(parse_times("TUNE_TIME_MS abc\n").is_err());
        assert!(parse_times("TUNE_TIME_MS\n").is_err());
        assert!(parse_times("TUNE_TIME_MS12\n").is_err());
        assert_eq!(parse_times("nothing here"), Ok(vec![]));
    }
}
