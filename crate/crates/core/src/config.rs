//! JSON configuration document: the link model plus run parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Number;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Violation};
use crate::model::{
    build_rate_table, validate_config, validate_link, ChannelDistribution, LinkModel,
    PacketLengthDistribution, PowerMenu, RateTable, SystemConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDoc {
    pub gains: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthsDoc {
    pub values: Vec<Number>,
    pub probs: Vec<f64>,
}

/// On-disk configuration. Rate-table entries and packet lengths are kept as
/// raw JSON numbers so non-integers surface as violations, not parse errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub power_menu: Vec<f64>,
    pub channel: ChannelDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_table: Option<Vec<Vec<Number>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_psd: Option<f64>,
    pub packet_lengths: LengthsDoc,
    pub beta: f64,
    pub v: f64,
    pub horizon_frames: u64,
    pub seed: u64,
}

/// A loaded configuration together with the SHA-256 of its source bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub document: ConfigDocument,
    pub fingerprint: String,
}

pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let document = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(LoadedConfig {
        document,
        fingerprint: fingerprint_bytes(&bytes),
    })
}

fn integer(n: &Number) -> Option<u32> {
    n.as_u64().and_then(|x| u32::try_from(x).ok())
}

impl ConfigDocument {
    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            beta: self.beta,
            v: self.v,
            horizon_frames: self.horizon_frames,
            seed: self.seed,
            noise_psd: self.noise_psd,
        }
    }

    /// Every violated invariant; the document is usable iff this is empty.
    pub fn validate(&self) -> Vec<Violation> {
        let (model, mut out) = self.assemble();
        if let Some(model) = model {
            out.extend(validate_link(&model));
        }
        out.extend(validate_config(&self.system_config(), self.power_menu.first().copied()));
        out
    }

    /// Builds the validated model and run configuration.
    pub fn build(&self) -> Result<(LinkModel, SystemConfig)> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let (model, _) = self.assemble();
        let model = model.expect("validated document assembles");
        let model = LinkModel::new(model.menu, model.channel, model.rates, model.lengths)?;
        Ok((model, self.system_config()))
    }

    fn assemble(&self) -> (Option<LinkModel>, Vec<Violation>) {
        let mut out = Vec::new();
        let menu = PowerMenu::new(self.power_menu.clone());
        let channel = ChannelDistribution::new(self.channel.gains.clone(), self.channel.probs.clone());

        let lengths: Option<Vec<u32>> = self.packet_lengths.values.iter().map(integer).collect();
        if lengths.is_none() {
            out.push(Violation::new(
                "lengths.non_integer",
                "packet lengths must be nonnegative integers",
            ));
        }

        let rates = match (&self.rate_table, self.noise_psd) {
            (Some(table), _) => {
                let rows: Option<Vec<Vec<u32>>> = table
                    .iter()
                    .map(|row| row.iter().map(integer).collect())
                    .collect();
                if rows.is_none() {
                    out.push(Violation::new(
                        "rates.non_integer",
                        "rate table entries must be nonnegative integers",
                    ));
                }
                rows.map(RateTable::new)
            }
            (None, Some(n0)) => {
                let menu_ok = menu.levels.iter().all(|p| p.is_finite() && *p > 0.0);
                let gains_ok = channel.gains.iter().all(|g| g.is_finite() && *g > 0.0);
                if menu_ok && gains_ok && n0.is_finite() && n0 > 0.0 {
                    build_rate_table(&channel, &menu, n0).ok()
                } else {
                    // reported by the menu/channel/config checks
                    None
                }
            }
            (None, None) => {
                out.push(Violation::new(
                    "rates.missing",
                    "either rate_table or noise_psd must be given",
                ));
                None
            }
        };

        let model = match (rates, lengths) {
            (Some(rates), Some(lengths)) => Some(LinkModel {
                menu,
                channel,
                rates,
                lengths: PacketLengthDistribution::new(lengths, self.packet_lengths.probs.clone()),
            }),
            _ => None,
        };
        (model, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OK: &str = r#"{
        "power_menu": [0.5, 2.0],
        "channel": {"gains": [1.0, 4.0], "probs": [0.75, 0.25]},
        "rate_table": [[1, 2], [2, 4]],
        "packet_lengths": {"values": [3, 6], "probs": [0.5, 0.5]},
        "beta": 1.0, "v": 10.0, "horizon_frames": 100, "seed": 7
    }"#;

    #[test]
    fn parses_and_builds() {
        let doc: ConfigDocument = serde_json::from_str(OK).unwrap();
        let (model, cfg) = doc.build().unwrap();
        assert_eq!(model.rates.k, vec![vec![1, 2], vec![2, 4]]);
        assert_eq!(model.lengths.lengths, vec![3, 6]);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn shannon_path() {
        let doc: ConfigDocument = serde_json::from_str(
            r#"{"power_menu": [1, 3], "channel": {"gains": [1, 3], "probs": [0.5, 0.5]},
                "noise_psd": 1.0, "packet_lengths": {"values": [4], "probs": [1]},
                "beta": 2, "v": 1, "horizon_frames": 1, "seed": 0}"#,
        )
        .unwrap();
        let (model, _) = doc.build().unwrap();
        assert_eq!(model.rates.k, vec![vec![1, 2], vec![2, 4]]);
    }

    #[test]
    fn fractional_rate_is_a_violation() {
        let mut doc: ConfigDocument = serde_json::from_str(OK).unwrap();
        doc.rate_table = Some(vec![
            vec![Number::from_f64(1.5).unwrap(), Number::from(2)],
            vec![Number::from(2), Number::from(4)],
        ]);
        let codes: Vec<_> = doc.validate().into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec!["rates.non_integer"]);
    }

    #[test]
    fn missing_rates_is_a_violation() {
        let mut doc: ConfigDocument = serde_json::from_str(OK).unwrap();
        doc.rate_table = None;
        assert!(matches!(doc.build(), Err(Error::Validation(v)) if v[0].code == "rates.missing"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = OK.replace("\"seed\": 7", "\"seed\": 7, \"extra\": 1");
        assert!(serde_json::from_str::<ConfigDocument>(&bad).is_err());
    }
}
