//! Run configuration and provenance for command-line tools: JSON configs
//! with `key.path=value` overrides, and a manifest written next to every
//! output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fsutil;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Sets `path` (dot-separated) in `root` to `raw`, parsed as JSON when it
/// parses and kept as a string otherwise. Intermediate objects are created.
pub fn set_path(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Configuration(format!("bad override key '{path}'")));
    }
    let mut cur = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Configuration(format!("'{key}' in '{path}' indexes an array")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Configuration(format!("index {idx} out of range ({len}) in '{path}'")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Configuration(format!("'{path}' descends into a scalar"))),
        };
    }
    unreachable!()
}

/// Builds a config: defaults, then the JSON file (merged key by key), then
/// each `key=value` override.
pub fn load_config<T: Serialize + DeserializeOwned + Default>(file: Option<&Path>, overrides: &[String]) -> Result<T> {
    let mut root = serde_json::to_value(T::default())?;
    if let Some(path) = file {
        let text = fsutil::read_to_string(path, "config")?;
        let given: Value = serde_json::from_str(&text)?;
        merge(&mut root, given);
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Configuration(format!("override '{o}' is not key=value")))?;
        set_path(&mut root, k.trim(), v.trim())?;
    }
    serde_json::from_value(root).map_err(|e| Error::Configuration(e.to_string()))
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses a frame list such as `0,5,10-20` (ranges inclusive); `None`
/// means every frame in `0..count`. Frames past `count` are an error.
pub fn parse_frames(spec: Option<&str>, count: usize) -> Result<Vec<usize>> {
    let Some(spec) = spec else {
        return Ok((0..count).collect());
    };
    let bad = || Error::Configuration(format!("bad frame list '{spec}'"));
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(item.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    if let Some(&f) = out.iter().find(|&&f| f >= count) {
        return Err(Error::Configuration(format!("frame {f} out of range ({count} frames)")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub formats: BTreeMap<String, u32>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            args: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            seeds: BTreeMap::new(),
            formats: BTreeMap::from([
                ("archive".to_string(), crate::archive::FORMAT_VERSION),
                ("sequence".to_string(), crate::dataset::SEQUENCE_VERSION),
                ("texture".to_string(), crate::texture::SECTION_VERSION),
            ]),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seconds: 0.0,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fsutil::write_json(&dir.join("manifest.json"), self, "run manifest")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthConfig;

    #[test]
    fn overrides_apply_in_order() {
        let c: SynthConfig = load_config(None, &["frames=12".into(), "excursion=[2,5]".into(), "shape.1=0.5".into()]).unwrap();
        assert_eq!(c.frames, 12);
        assert_eq!(c.excursion, (2, 5));
        assert_eq!(c.shape[1], 0.5);
        assert_eq!(c.seed, SynthConfig::default().seed);
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"frames": 30, "seed": 4}"#).unwrap();
        let c: SynthConfig = load_config(Some(&p), &["seed=9".into()]).unwrap();
        assert_eq!((c.frames, c.seed), (30, 9));
    }

    #[test]
    fn frame_lists() {
        assert_eq!(parse_frames(Some("0, 3-5,9"), 10).unwrap(), vec![0, 3, 4, 5, 9]);
        assert_eq!(parse_frames(None, 3).unwrap(), vec![0, 1, 2]);
        assert!(parse_frames(Some("5-3"), 10).is_err());
        assert!(parse_frames(Some("10"), 10).is_err());
        assert!(parse_frames(Some("x"), 10).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            load_config::<SynthConfig>(None, &["frmes=3".into()]),
            Err(Error::Configuration(_))
        ));
        assert!(load_config::<SynthConfig>(None, &["frames".into()]).is_err());
        assert!(load_config::<SynthConfig>(None, &["frames.x=1".into()]).is_err());
        assert!(load_config::<SynthConfig>(None, &["shape.9=1".into()]).is_err());
    }
}
