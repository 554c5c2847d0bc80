//! Flat `KEY = value` configuration files and CSV result rows.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::sim::{ClientMode, MetricsReport, SimParams};
use crate::workload::{Algorithm, StartDistribution, TransactionMix};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected KEY = value")]
    Syntax { line: usize },
    #[error("line {line}: unknown parameter {key}")]
    UnknownParam { line: usize, key: String },
    #[error("unknown parameter {0}")]
    UnknownVary(String),
    #[error("line {line}: {key} given twice")]
    Duplicate { line: usize, key: String },
    #[error("{key}: cannot parse {value:?}")]
    BadValue { key: String, value: String },
    #[error("transaction probabilities {keys} sum to {sum}, expected 1")]
    BadMix { keys: String, sum: f64 },
    #[error("{keys}: {msg}")]
    Invalid { keys: String, msg: String },
}

/// Every key a configuration file may set.
pub const KEYS: &[&str] = &[
    "RCC", "IMLVL", "IWDSIZE", "ICPU", "RMACC", "RMTEST", "IPGSIZE", "RSEEK", "RLATENCY", "RTRANSFER", "RAVGTHINK", "NCL",
    "IAVGVER", "RPSUPER", "RPCOMP", "RPEQUI", "INOBJ", "IAVGASIZE", "IAVGNATTR", "IBUFF", "IMD", "ISEGSIZE", "ITHRESHOLD",
    "ISCALEF", "ISPLIT", "PT1", "PT2", "PT3", "PT4", "PT5", "PT6", "PT7", "PT8", "PT9", "PT10", "PT11", "PT12", "PT13",
    "PT14", "PT15", "SIMTIME", "ALGORITHM", "DISTRIBUTION", "SEED", "CLIENTS", "READPCT",
];

/// Raw key/value pairs of a configuration file, keys upper-cased.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = k.trim().to_ascii_uppercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownParam { line: i + 1, key });
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Overrides one key; the key must be a known parameter.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        let key = key.trim().to_ascii_uppercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownVary(key));
        }
        self.values.insert(key, value.into());
        Ok(())
    }

    fn num<T: std::str::FromStr>(&self, key: &str, target: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.get(key) {
            *target = v.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: v.into() })?;
        }
        Ok(())
    }

    pub fn to_params(&self) -> Result<SimParams, ConfigError> {
        let algorithm = match self.get("ALGORITHM") {
            Some(v) => Algorithm::parse(v).ok_or_else(|| ConfigError::BadValue { key: "ALGORITHM".into(), value: v.into() })?,
            None => Algorithm::Ck,
        };
        let mut p = SimParams::defaults(algorithm);
        self.num("RCC", &mut p.rcc)?;
        self.num("IMLVL", &mut p.imlvl)?;
        self.num("IWDSIZE", &mut p.iwdsize)?;
        self.num("ICPU", &mut p.icpu)?;
        self.num("RMACC", &mut p.rmacc)?;
        self.num("RMTEST", &mut p.rmtest)?;
        self.num("IPGSIZE", &mut p.ipgsize)?;
        self.num("RSEEK", &mut p.disk.seek_ms)?;
        self.num("RLATENCY", &mut p.disk.latency_ms)?;
        self.num("RTRANSFER", &mut p.disk.transfer_ms)?;
        self.num("RAVGTHINK", &mut p.ravgthink)?;
        self.num("NCL", &mut p.schema.ncl)?;
        self.num("IAVGVER", &mut p.schema.iavgver)?;
        self.num("RPSUPER", &mut p.schema.rpsuper)?;
        self.num("RPCOMP", &mut p.schema.rpcomp)?;
        self.num("RPEQUI", &mut p.schema.rpequi)?;
        self.num("INOBJ", &mut p.inobj)?;
        self.num("IAVGASIZE", &mut p.schema.iavgasize)?;
        self.num("IAVGNATTR", &mut p.schema.iavgnattr)?;
        self.num("IBUFF", &mut p.ibuff)?;
        self.num("IMD", &mut p.imd)?;
        self.num("ISEGSIZE", &mut p.isegsize)?;
        self.num("ITHRESHOLD", &mut p.ck.ithreshold)?;
        self.num("ISCALEF", &mut p.ck.iscalef)?;
        self.num("SIMTIME", &mut p.simtime)?;
        self.num("SEED", &mut p.seed)?;
        if let Some(v) = self.get("ISPLIT") {
            p.ck.isplit = match v.to_ascii_uppercase().as_str() {
                "ON" | "TRUE" | "1" => true,
                "OFF" | "FALSE" | "0" => false,
                _ => return Err(ConfigError::BadValue { key: "ISPLIT".into(), value: v.into() }),
            };
        }
        if let Some(v) = self.get("DISTRIBUTION") {
            p.distribution =
                StartDistribution::parse(v).ok_or_else(|| ConfigError::BadValue { key: "DISTRIBUTION".into(), value: v.into() })?;
        }
        if let Some(v) = self.get("CLIENTS") {
            p.clients = ClientMode::parse(v).ok_or_else(|| ConfigError::BadValue { key: "CLIENTS".into(), value: v.into() })?;
        }

        let mut mix = TransactionMix::default_for(algorithm);
        let mut given = Vec::new();
        for (i, slot) in mix.pt.iter_mut().enumerate() {
            let key = format!("PT{}", i + 1);
            if self.get(&key).is_some() {
                self.num(&key, slot)?;
                given.push(key);
            }
        }
        if mix.validate().is_err() {
            let keys = if given.is_empty() { "PT1..PT15".to_string() } else { given.join(", ") };
            return Err(ConfigError::BadMix { keys, sum: mix.pt.iter().sum() });
        }
        if let Some(v) = self.get("READPCT") {
            let pct: f64 = v.parse().map_err(|_| ConfigError::BadValue { key: "READPCT".into(), value: v.into() })?;
            if !(0.0..=100.0).contains(&pct) {
                return Err(ConfigError::Invalid { keys: "READPCT".into(), msg: "must lie in [0, 100]".into() });
            }
            mix = mix.with_read_percentage(pct);
        }
        p.mix = mix;
        p.validate().map_err(|e| ConfigError::Invalid { keys: self.values.keys().cloned().collect::<Vec<_>>().join(","), msg: e.to_string() })?;
        Ok(p)
    }
}

/// Parameter columns of a result row, in a fixed order.
pub fn param_columns(p: &SimParams) -> Vec<(String, String)> {
    let mut cols: Vec<(String, String)> = vec![
        ("ALGORITHM".into(), p.algorithm.as_str().into()),
        ("SEED".into(), p.seed.to_string()),
        ("DISTRIBUTION".into(), p.distribution.as_str().into()),
        ("CLIENTS".into(), p.clients.as_str().into()),
        ("RCC".into(), p.rcc.to_string()),
        ("IMLVL".into(), p.imlvl.to_string()),
        ("IWDSIZE".into(), p.iwdsize.to_string()),
        ("ICPU".into(), p.icpu.to_string()),
        ("RMACC".into(), p.rmacc.to_string()),
        ("RMTEST".into(), p.rmtest.to_string()),
        ("IPGSIZE".into(), p.ipgsize.to_string()),
        ("RSEEK".into(), p.disk.seek_ms.to_string()),
        ("RLATENCY".into(), p.disk.latency_ms.to_string()),
        ("RTRANSFER".into(), p.disk.transfer_ms.to_string()),
        ("RAVGTHINK".into(), p.ravgthink.to_string()),
        ("NCL".into(), p.schema.ncl.to_string()),
        ("IAVGVER".into(), p.schema.iavgver.to_string()),
        ("RPSUPER".into(), p.schema.rpsuper.to_string()),
        ("RPCOMP".into(), p.schema.rpcomp.to_string()),
        ("RPEQUI".into(), p.schema.rpequi.to_string()),
        ("INOBJ".into(), p.inobj.to_string()),
        ("IAVGASIZE".into(), p.schema.iavgasize.to_string()),
        ("IAVGNATTR".into(), p.schema.iavgnattr.to_string()),
        ("IBUFF".into(), p.ibuff.to_string()),
        ("IMD".into(), p.imd.to_string()),
        ("ISEGSIZE".into(), p.isegsize.to_string()),
        ("ITHRESHOLD".into(), p.ck.ithreshold.to_string()),
        ("ISCALEF".into(), p.ck.iscalef.to_string()),
        ("ISPLIT".into(), if p.ck.isplit { "ON" } else { "OFF" }.into()),
    ];
    for (i, v) in p.mix.pt.iter().enumerate() {
        cols.push((format!("PT{}", i + 1), v.to_string()));
    }
    cols.push(("READPCT".into(), format!("{:.4}", p.mix.read_percentage())));
    cols.push(("SIMTIME".into(), p.simtime.to_string()));
    cols
}

/// Metric columns of a result row.
pub fn metric_columns(r: &MetricsReport) -> Vec<(String, String)> {
    vec![
        ("mean_response_ms".into(), r.mean_response_ms.map(|v| format!("{v:.4}")).unwrap_or_default()),
        ("transaction_ios".into(), r.transaction_ios.to_string()),
        ("clustering_time_ms".into(), format!("{:.4}", r.clustering_time_ms)),
        ("clustering_ios".into(), r.clustering_ios.to_string()),
        ("max_pages".into(), r.max_pages.to_string()),
        ("throughput".into(), format!("{:.6}", r.throughput)),
        ("transactions".into(), r.transactions.to_string()),
        ("reclusterings".into(), r.reclusterings.to_string()),
        ("max_pages_transient".into(), r.max_pages_transient.to_string()),
        ("final_objects".into(), r.final_objects.to_string()),
        ("buffer_hits".into(), r.buffer.hits.to_string()),
        ("buffer_misses".into(), r.buffer.misses.to_string()),
        ("buffer_dirty_writes".into(), r.buffer.dirty_writes.to_string()),
    ]
}

/// Writes a header and one row per run.
pub fn write_csv<W: std::io::Write>(out: W, rows: &[(SimParams, MetricsReport)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if let Some((p, r)) = rows.first() {
        let header: Vec<String> = param_columns(p).into_iter().chain(metric_columns(r)).map(|(k, _)| k).collect();
        w.write_record(&header)?;
    }
    for (p, r) in rows {
        let rec: Vec<String> = param_columns(p).into_iter().chain(metric_columns(r)).map(|(_, v)| v).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let p = Config::parse("").unwrap().to_params().unwrap();
        assert_eq!(p, SimParams::defaults(Algorithm::Ck));
    }

    #[test]
    fn keys_and_comments() {
        let c = Config::parse("# comment\nINOBJ = 250\nalgorithm = cactis # inline\nISPLIT = OFF\n").unwrap();
        let p = c.to_params().unwrap();
        assert_eq!((p.inobj, p.algorithm, p.ck.isplit), (250, Algorithm::Cactis, false));
        assert_eq!(p.mix, TransactionMix::default_for(Algorithm::Cactis));
    }

    #[test]
    fn bad_mix_names_keys() {
        let err = Config::parse("PT1 = 0.5\nPT2 = 0.5").unwrap().to_params().unwrap_err();
        match err {
            ConfigError::BadMix { keys, .. } => assert_eq!(keys, "PT1, PT2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        assert!(matches!(Config::parse("FOO = 1"), Err(ConfigError::UnknownParam { .. })));
        assert!(matches!(Config::parse("INOBJ = 1\nINOBJ = 2"), Err(ConfigError::Duplicate { .. })));
        assert!(matches!(Config::parse("INOBJ 1"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(Config::parse("INOBJ = x").unwrap().to_params(), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn every_param_once_per_row() {
        let p = SimParams::defaults(Algorithm::Orion);
        let cols = param_columns(&p);
        let mut names: Vec<_> = cols.iter().map(|(k, _)| k.clone()).collect();
        names.sort();
        let n = names.len();
        names.dedup();
        assert_eq!(n, names.len());
    }
}
