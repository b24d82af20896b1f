//! Batch runner for flow and discrete-algorithm experiments.
//!
//! Experiments are declared in a JSON config (see [`config`]), executed by
//! [`runner::run_config`] and reported as pass/fail verdicts. Every experiment
//! writes CSV tables, SVG plots and a `report.json` under its own output prefix.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod plot;
pub mod runner;

pub use error::{CliError, Result};

use esigo_core::weights::WeightDescriptor;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "ESIGO_OUT_DIR";

/// Parses a weight given as JSON or as `name[:arg,arg,...]`.
///
/// Short forms: `truncation-linear`, `power:K`, `sigmoid[:STEEPNESS,CENTER]`,
/// `affine:INTERCEPT,SLOPE`, `constant:C`, `finite:W1,W2,...`.
pub fn parse_weight_descriptor(text: &str) -> Result<WeightDescriptor> {
    let text = text.trim();
    let bad = |msg: &str| CliError::WeightDescriptor(text.to_string(), msg.to_string());
    if text.starts_with('{') {
        return serde_json::from_str(text).map_err(|e| bad(&e.to_string()));
    }
    let (name, args) = text.split_once(':').unwrap_or((text, ""));
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(&e.to_string()))?
    };
    let arity = |n: usize| {
        if nums.len() == n {
            Ok(())
        } else {
            Err(bad(&format!("'{name}' takes {n} argument(s)")))
        }
    };
    match name {
        "truncation-linear" => arity(0).map(|_| WeightDescriptor::TruncationLinear),
        "power" => arity(1).map(|_| WeightDescriptor::Power { k: nums[0] }),
        "sigmoid" if nums.is_empty() => Ok(WeightDescriptor::Sigmoid {
            steepness: 10.0,
            center: 0.3,
        }),
        "sigmoid" => arity(2).map(|_| WeightDescriptor::Sigmoid {
            steepness: nums[0],
            center: nums[1],
        }),
        "affine" => arity(2).map(|_| WeightDescriptor::Affine {
            intercept: nums[0],
            slope: nums[1],
        }),
        "constant" => arity(1).map(|_| WeightDescriptor::Constant { value: nums[0] }),
        "finite" if !nums.is_empty() => Ok(WeightDescriptor::Finite { weights: nums }),
        _ => Err(bad("unknown weight")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_forms() {
        assert_eq!(
            parse_weight_descriptor("truncation-linear").unwrap(),
            WeightDescriptor::TruncationLinear
        );
        assert_eq!(
            parse_weight_descriptor("power:2").unwrap(),
            WeightDescriptor::Power { k: 2.0 }
        );
        assert_eq!(
            parse_weight_descriptor("finite:1,0,0").unwrap(),
            WeightDescriptor::Finite {
                weights: vec![1.0, 0.0, 0.0]
            }
        );
        assert_eq!(
            parse_weight_descriptor("sigmoid").unwrap(),
            WeightDescriptor::Sigmoid {
                steepness: 10.0,
                center: 0.3
            }
        );
    }

    #[test]
    fn json_form() {
        let d = parse_weight_descriptor(r#"{"kind": "power", "k": 3}"#).unwrap();
        assert_eq!(d, WeightDescriptor::Power { k: 3.0 });
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_weight_descriptor("power").is_err());
        assert!(parse_weight_descriptor("power:x").is_err());
        assert!(parse_weight_descriptor("nonsense").is_err());
        assert!(parse_weight_descriptor("finite").is_err());
    }
}
