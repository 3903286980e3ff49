//! `key = value` run configuration files.

use std::path::PathBuf;

use thiserror::Error;

use super::{NetworkSource, SimConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
}

/// Applies one setting to `cfg`. Shared by the file parser and the CLI.
pub fn apply_setting(cfg: &mut SimConfig, key: &str, value: &str) -> Result<(), String> {
    fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        v.parse::<T>().map_err(|e| e.to_string())
    }
    match key {
        "network" => {
            cfg.network = if value == "city" {
                NetworkSource::City
            } else {
                NetworkSource::File(PathBuf::from(value))
            }
        }
        "vehicles" | "n_vehicles" => cfg.n_vehicles = num(value)?,
        "policy" => cfg.policy = value.parse()?,
        "routing" => cfg.routing.mode = value.parse()?,
        "alpha" => cfg.routing.alpha = num(value)?,
        "beta" => cfg.routing.beta = num(value)?,
        "gamma" => cfg.routing.gamma = num(value)?,
        "demand" => cfg.demand.groups_per_hour = num(value)?,
        "duration" => cfg.duration = num(value)?,
        "warmup" => cfg.warmup = num(value)?,
        "dt" => cfg.limits.dt = num(value)?,
        "a_max" => cfg.limits.a_max = num(value)?,
        "s0" | "separation" => cfg.limits.s0 = num(value)?,
        "dwell_min" => cfg.dwell.min = num(value)?,
        "dwell_mode" => cfg.dwell.mode = num(value)?,
        "dwell_max" => cfg.dwell.max = num(value)?,
        "sunday_driver_fraction" => cfg.sunday_driver_fraction = num(value)?,
        "sunday_speed_factor" => cfg.sunday_speed_factor = num(value)?,
        "detour_after" => cfg.detour_after = num(value)?,
        "seed" => cfg.seed = num(value)?,
        "strict" => cfg.strict = num(value)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Parses a config file on top of the defaults.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if let Err(message) = apply_setting(&mut cfg, k, v) {
            return Err(if message.starts_with("unknown key") {
                ConfigError::UnknownKey { line, key: k.into() }
            } else {
                ConfigError::BadValue {
                    line,
                    key: k.into(),
                    message,
                }
            });
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::PriorityPolicy;
    use crate::routing::RoutingMode;

    #[test]
    fn parses_keys_over_defaults() {
        let c = parse_config(
            "# run\nvehicles = 96\npolicy = road  # priority\nrouting = dynamic\ngamma = 2.5\n\nnetwork = nets/a.net\nseed=7\n",
        )
        .unwrap();
        assert_eq!(c.n_vehicles, 96);
        assert_eq!(c.policy, PriorityPolicy::RoadFirst);
        assert_eq!(c.routing.mode, RoutingMode::Dynamic);
        assert_eq!(c.routing.gamma, 2.5);
        assert_eq!(c.network, NetworkSource::File("nets/a.net".into()));
        assert_eq!(c.seed, 7);
        assert_eq!(c.duration, SimConfig::default().duration);
    }

    #[test]
    fn reports_line_numbers() {
        assert_eq!(
            parse_config("vehicles = 3\nbogus = 1\n"),
            Err(ConfigError::UnknownKey { line: 2, key: "bogus".into() })
        );
        assert!(matches!(parse_config("\n\nvehicles 3\n"), Err(ConfigError::Syntax { line: 3, .. })));
        assert!(matches!(
            parse_config("policy = left\n"),
            Err(ConfigError::BadValue { line: 1, .. })
        ));
    }
}
