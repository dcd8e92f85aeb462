//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use eqfree_core::invariance::NewtonSettings;
use eqfree_core::{
    BasisSpec, InvarianceProbe, RenormConfig, SimConfig, TemplateAnchor, TemplateCondition,
};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every tunable of a run. Lengths are in cm, times in s, the diffusion
/// coefficient in cm/s^½.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub diffusion: f64,
    pub dt: f64,
    pub strata: usize,
    pub order: usize,

    pub test_sigma_x: f64,
    pub test_sigma_y: f64,
    pub scale_a: f64,
    pub probe_x1: f64,
    pub probe_y1: f64,
    pub probe_x2: f64,
    pub probe_y2: f64,
    pub burst_tau: f64,
    pub probe_copies: usize,
    pub probe_particles: usize,
    pub newton_p0: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub newton_fd_step: f64,
    pub p_max: f64,

    pub template_e: f64,
    pub template_m: f64,
    pub horizon: f64,
    pub exponent_p: f64,
    pub exponent_a: f64,
    pub copies: usize,
    pub particles: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub extra_iterations: usize,
    pub moment_particles: usize,
    pub anchor: TemplateAnchor,
    pub initial_half_width: f64,

    pub alpha_t1: f64,
    pub alpha_t2: f64,
    pub alpha_copies: usize,
    pub alpha_particles: usize,

    pub simulate_particles: usize,
    pub simulate_time: f64,

    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let probe = InvarianceProbe::default();
        let newton = NewtonSettings::default();
        let renorm = RenormConfig::default();
        let sim = SimConfig::default();
        let basis = BasisSpec::default();
        Self {
            seed: 0,
            diffusion: sim.diffusion,
            dt: sim.dt,
            strata: basis.strata,
            order: basis.order,
            test_sigma_x: probe.test_sigma.0,
            test_sigma_y: probe.test_sigma.1,
            scale_a: probe.scale_a,
            probe_x1: probe.points[0].0,
            probe_y1: probe.points[0].1,
            probe_x2: probe.points[1].0,
            probe_y2: probe.points[1].1,
            burst_tau: probe.burst_tau,
            probe_copies: probe.copies,
            probe_particles: probe.particles,
            newton_p0: newton.p0,
            newton_tol: newton.tol,
            newton_max_iter: newton.max_iter,
            newton_fd_step: newton.fd_step,
            p_max: newton.p_max,
            template_e: renorm.template.e,
            template_m: renorm.template.m,
            horizon: renorm.horizon,
            exponent_p: renorm.exponent_p,
            exponent_a: -2.0,
            copies: renorm.copies,
            particles: renorm.particles,
            max_iterations: renorm.max_iterations,
            tolerance: renorm.tolerance,
            extra_iterations: renorm.extra_iterations,
            moment_particles: renorm.moment_particles,
            anchor: renorm.anchor,
            initial_half_width: 10.0,
            alpha_t1: 1.5,
            alpha_t2: 3.0,
            alpha_copies: 200,
            alpha_particles: 100_000,
            simulate_particles: 10_000,
            simulate_time: 1.0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config {
        line,
        message: format!("cannot parse value `{value}` for `{key}`"),
    })
}

fn anchor_name(anchor: TemplateAnchor) -> &'static str {
    match anchor {
        TemplateAnchor::Empirical => "empirical",
        TemplateAnchor::Projected => "projected",
    }
}

impl ExperimentConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| CliError::Config {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            cfg.set(line, key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), CliError> {
        macro_rules! num {
            ($field:ident) => {
                self.$field = parse_num(line, key, value)?
            };
        }
        match key {
            "seed" => num!(seed),
            "diffusion" => num!(diffusion),
            "dt" => num!(dt),
            "strata" => num!(strata),
            "order" => num!(order),
            "test_sigma_x" => num!(test_sigma_x),
            "test_sigma_y" => num!(test_sigma_y),
            "scale_a" => num!(scale_a),
            "probe_x1" => num!(probe_x1),
            "probe_y1" => num!(probe_y1),
            "probe_x2" => num!(probe_x2),
            "probe_y2" => num!(probe_y2),
            "burst_tau" => num!(burst_tau),
            "probe_copies" => num!(probe_copies),
            "probe_particles" => num!(probe_particles),
            "newton_p0" => num!(newton_p0),
            "newton_tol" => num!(newton_tol),
            "newton_max_iter" => num!(newton_max_iter),
            "newton_fd_step" => num!(newton_fd_step),
            "p_max" => num!(p_max),
            "template_e" => num!(template_e),
            "template_m" => num!(template_m),
            "horizon" => num!(horizon),
            "exponent_p" => num!(exponent_p),
            "exponent_a" => num!(exponent_a),
            "copies" => num!(copies),
            "particles" => num!(particles),
            "max_iterations" => num!(max_iterations),
            "tolerance" => num!(tolerance),
            "extra_iterations" => num!(extra_iterations),
            "moment_particles" => num!(moment_particles),
            "initial_half_width" => num!(initial_half_width),
            "alpha_t1" => num!(alpha_t1),
            "alpha_t2" => num!(alpha_t2),
            "alpha_copies" => num!(alpha_copies),
            "alpha_particles" => num!(alpha_particles),
            "simulate_particles" => num!(simulate_particles),
            "simulate_time" => num!(simulate_time),
            "anchor" => {
                self.anchor = match value {
                    "empirical" => TemplateAnchor::Empirical,
                    "projected" => TemplateAnchor::Projected,
                    _ => {
                        return Err(CliError::Config {
                            line,
                            message: format!(
                                "anchor must be `empirical` or `projected`, got `{value}`"
                            ),
                        })
                    }
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => {
                return Err(CliError::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }

    /// Every setting as `key = value`, one per line, in a fixed order. This is
    /// what the config hash covers.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", &self.seed);
        put("diffusion", &self.diffusion);
        put("dt", &self.dt);
        put("strata", &self.strata);
        put("order", &self.order);
        put("test_sigma_x", &self.test_sigma_x);
        put("test_sigma_y", &self.test_sigma_y);
        put("scale_a", &self.scale_a);
        put("probe_x1", &self.probe_x1);
        put("probe_y1", &self.probe_y1);
        put("probe_x2", &self.probe_x2);
        put("probe_y2", &self.probe_y2);
        put("burst_tau", &self.burst_tau);
        put("probe_copies", &self.probe_copies);
        put("probe_particles", &self.probe_particles);
        put("newton_p0", &self.newton_p0);
        put("newton_tol", &self.newton_tol);
        put("newton_max_iter", &self.newton_max_iter);
        put("newton_fd_step", &self.newton_fd_step);
        put("p_max", &self.p_max);
        put("template_e", &self.template_e);
        put("template_m", &self.template_m);
        put("horizon", &self.horizon);
        put("exponent_p", &self.exponent_p);
        put("exponent_a", &self.exponent_a);
        put("copies", &self.copies);
        put("particles", &self.particles);
        put("max_iterations", &self.max_iterations);
        put("tolerance", &self.tolerance);
        put("extra_iterations", &self.extra_iterations);
        put("moment_particles", &self.moment_particles);
        put("anchor", &anchor_name(self.anchor));
        put("initial_half_width", &self.initial_half_width);
        put("alpha_t1", &self.alpha_t1);
        put("alpha_t2", &self.alpha_t2);
        put("alpha_copies", &self.alpha_copies);
        put("alpha_particles", &self.alpha_particles);
        put("simulate_particles", &self.simulate_particles);
        put("simulate_time", &self.simulate_time);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            diffusion: self.diffusion,
            dt: self.dt,
            n_particles: self.simulate_particles,
            seed: self.seed,
        }
    }

    pub fn basis(&self) -> Result<BasisSpec, CliError> {
        Ok(BasisSpec::new(self.strata, self.order)?)
    }

    pub fn probe(&self) -> InvarianceProbe {
        InvarianceProbe {
            test_sigma: (self.test_sigma_x, self.test_sigma_y),
            scale_a: self.scale_a,
            points: [
                (self.probe_x1, self.probe_y1),
                (self.probe_x2, self.probe_y2),
            ],
            burst_tau: self.burst_tau,
            copies: self.probe_copies,
            particles: self.probe_particles,
            seed: self.seed,
        }
    }

    pub fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            p0: self.newton_p0,
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            fd_step: self.newton_fd_step,
            p_max: self.p_max,
        }
    }

    pub fn template(&self) -> Result<TemplateCondition, CliError> {
        Ok(TemplateCondition::new(self.template_e, self.template_m)?)
    }

    pub fn renorm(&self) -> Result<RenormConfig, CliError> {
        let cfg = RenormConfig {
            template: self.template()?,
            horizon: self.horizon,
            exponent_p: self.exponent_p,
            copies: self.copies,
            particles: self.particles,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            seed: self.seed,
            moment_particles: self.moment_particles,
            anchor: self.anchor,
            extra_iterations: self.extra_iterations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The renormalization settings with the copy and particle counts used
    /// for the similarity-exponent run.
    pub fn alpha_renorm(&self) -> Result<RenormConfig, CliError> {
        Ok(RenormConfig {
            copies: self.alpha_copies,
            particles: self.alpha_particles,
            ..self.renorm()?
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_canonical_text() {
        let cfg = ExperimentConfig::default();
        let parsed = ExperimentConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = ExperimentConfig::parse("# header\n\nseed = 7 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ExperimentConfig::parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert_eq!(err.to_string(), "config line 2: unknown key `bogus`");
    }

    #[test]
    fn bad_value_reports_line() {
        let err = ExperimentConfig::parse("\ncopies = many\n").unwrap_err();
        assert!(err.to_string().starts_with("config line 2:"));
    }

    #[test]
    fn hash_tracks_values() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            seed: 1,
            ..a.clone()
        };
        assert_eq!(a.hash().len(), 16);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ExperimentConfig::default().hash());
    }
}
