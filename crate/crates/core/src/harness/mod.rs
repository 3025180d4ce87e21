//! Experiment harness: configuration, synthetic data, attacks, baselines,
//! retraining, reports and the command implementations behind the CLI.

pub mod attack;
pub mod baseline;
pub mod commands;
pub mod report;
pub mod retrain;
pub mod sbm;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::trainer::TrainConfig;
use attack::AttackKind;
use baseline::BaselineKind;
use sbm::{gen_sbm, SbmSpec, SyntheticGraph};

/// Largest attack rate accepted by experiment configs.
pub const MAX_ATTACK_RATE: f64 = 0.4;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub train: TrainConfig,
    /// Dataset directory; the synthetic generator is used when absent.
    pub data: Option<PathBuf>,
    pub sbm: SbmSpec,
    pub attack: Option<AttackKind>,
    pub attack_rate: f64,
    pub baseline: BaselineKind,
    pub drop_rate: f64,
    pub repeats: usize,
    pub out: PathBuf,
    /// Include per-epoch wall-clock time in metrics streams.
    pub timing: bool,
    pub learned_edges: Option<PathBuf>,
    pub random_matched: bool,
    pub sweep_mu: Vec<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            train: TrainConfig::default(),
            data: None,
            sbm: SbmSpec::default(),
            attack: None,
            attack_rate: 0.2,
            baseline: BaselineKind::Plain,
            drop_rate: 0.5,
            repeats: 1,
            out: PathBuf::from("run"),
            timing: false,
            learned_edges: None,
            random_matched: true,
            sweep_mu: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentSpec {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "data" => self.data = (!v.is_empty()).then(|| PathBuf::from(v)),
            "sbm_blocks" => self.sbm.blocks = parse_list(&key, v)?,
            "sbm_p_intra" => self.sbm.p_intra = parse(&key, v)?,
            "sbm_p_inter" => self.sbm.p_inter = parse(&key, v)?,
            "sbm_noise_edges" => self.sbm.noise_edges = parse(&key, v)?,
            "sbm_dim" => self.sbm.dim = parse(&key, v)?,
            "sbm_separation" => self.sbm.separation = parse(&key, v)?,
            "sbm_seed" => self.sbm.seed = parse(&key, v)?,
            "attack" => {
                self.attack = match v {
                    "none" => None,
                    other => Some(other.parse().map_err(Error::config)?),
                }
            }
            "attack_rate" => self.attack_rate = parse(&key, v)?,
            "baseline" => self.baseline = v.parse().map_err(Error::config)?,
            "drop_rate" => self.drop_rate = parse(&key, v)?,
            "repeats" => self.repeats = parse(&key, v)?,
            "out" => self.out = PathBuf::from(v),
            "timing" => self.timing = parse(&key, v)?,
            "learned_edges" => self.learned_edges = (!v.is_empty()).then(|| PathBuf::from(v)),
            "random_matched" => self.random_matched = parse(&key, v)?,
            "sweep_mu" => self.sweep_mu = parse_list(&key, v)?,
            other => self.train.set(other, v)?,
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.data.is_none() {
            self.sbm.validate()?;
        }
        if !(0.0..=MAX_ATTACK_RATE).contains(&self.attack_rate) {
            return Err(Error::config(format!(
                "attack_rate = {} outside [0, {MAX_ATTACK_RATE}]",
                self.attack_rate
            )));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::config(format!("drop_rate = {} outside [0, 1)", self.drop_rate)));
        }
        if self.repeats < 1 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if let Some(mu) = self.sweep_mu.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::config(format!("sweep mu {mu} outside [0, 1]")));
        }
        Ok(())
    }

    /// Training seeds `seed, seed + 1, …` for each repeat.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|r| self.train.seed + r).collect()
    }

    /// Every key with its current value, training keys first.
    pub fn echo(&self) -> String {
        let mut out = self.train.echo();
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let lines = [
            ("data", path(&self.data)),
            ("sbm_blocks", join(&self.sbm.blocks)),
            ("sbm_p_intra", self.sbm.p_intra.to_string()),
            ("sbm_p_inter", self.sbm.p_inter.to_string()),
            ("sbm_noise_edges", self.sbm.noise_edges.to_string()),
            ("sbm_dim", self.sbm.dim.to_string()),
            ("sbm_separation", self.sbm.separation.to_string()),
            ("sbm_seed", self.sbm.seed.to_string()),
            ("attack", self.attack.map_or("none".to_string(), |a| a.to_string())),
            ("attack_rate", self.attack_rate.to_string()),
            ("baseline", self.baseline.to_string()),
            ("drop_rate", self.drop_rate.to_string()),
            ("repeats", self.repeats.to_string()),
            ("out", self.out.display().to_string()),
            ("timing", self.timing.to_string()),
            ("learned_edges", path(&self.learned_edges)),
            ("random_matched", self.random_matched.to_string()),
            ("sweep_mu", join(&self.sweep_mu)),
        ];
        for (k, v) in lines {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Applies a `key = value` config text. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, idx + 1, format!("expected `key = value`, got `{line}`")))?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(msg) => Error::parse(origin, idx + 1, msg),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Applies `--key value`, `--key=value` and bare `--flag` (meaning `true`).
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(body) = arg.strip_prefix("--") else {
                return Err(Error::config(format!("unexpected argument `{arg}`")));
            };
            if let Some((k, v)) = body.split_once('=') {
                self.set(k, v)?;
                i += 1;
            } else if args.get(i + 1).is_some_and(|next| !next.starts_with("--")) {
                self.set(body, &args[i + 1])?;
                i += 2;
            } else {
                self.set(body, "true")?;
                i += 1;
            }
        }
        Ok(())
    }

    /// Loads the dataset directory, or generates the synthetic graph.
    pub fn dataset(&self) -> Result<(Dataset, Option<SyntheticGraph>)> {
        match &self.data {
            Some(dir) => Ok((Dataset::load(dir)?, None)),
            None => {
                let syn = gen_sbm(&self.sbm)?;
                Ok((syn.dataset.clone(), Some(syn)))
            }
        }
    }
}

/// Runs `f` once per seed, in parallel, returning results in seed order.
pub fn run_repeats<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    seeds.par_iter().map(|&s| f(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_and_overrides() {
        let mut spec = ExperimentSpec::default();
        spec.apply_text(
            "# comment\nmu = 0.7\n\nsbm_blocks = 50, 60 # trailing\nattack = add\n",
            Path::new("cfg"),
        )
        .unwrap();
        assert_eq!(spec.train.mu, 0.7);
        assert_eq!(spec.sbm.blocks, vec![50, 60]);
        assert_eq!(spec.attack, Some(AttackKind::Add));
        let args: Vec<String> = ["--mu", "0.9", "--epochs=5", "--timing", "--drop-rate", "0.3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        spec.apply_overrides(&args).unwrap();
        assert_eq!(spec.train.mu, 0.9);
        assert_eq!(spec.train.epochs, 5);
        assert!(spec.timing);
        assert_eq!(spec.drop_rate, 0.3);
    }

    #[test]
    fn echo_round_trips() {
        let mut spec = ExperimentSpec {
            attack: Some(AttackKind::Remove),
            repeats: 3,
            learned_edges: Some(PathBuf::from("x/edges.tsv")),
            ..ExperimentSpec::default()
        };
        spec.sbm.blocks = vec![10, 20, 30];
        let mut back = ExperimentSpec::default();
        back.apply_text(&spec.echo(), Path::new("echo")).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn bad_lines_report_their_position() {
        let mut spec = ExperimentSpec::default();
        let err = spec.apply_text("mu = 0.5\nnonsense\n", Path::new("cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = spec.apply_text("mu = x\n", Path::new("cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn attack_rate_is_bounded() {
        let spec = ExperimentSpec {
            attack_rate: 0.5,
            ..ExperimentSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn repeats_come_back_in_seed_order() {
        let out = run_repeats(&[5, 3, 9, 1], |s| Ok(s * 2)).unwrap();
        assert_eq!(out, vec![10, 6, 18, 2]);
    }
}
