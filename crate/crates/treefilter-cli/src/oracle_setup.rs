//! Constructs the configured oracle from an oracle config file.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use treefilter::corpus::Chunk;
use treefilter::jsonl::{load_lookup_oracle, load_value_oracle};
use treefilter::oracle::{MemoizedOracle, OracleConfig, OracleKind, RemoteOracle};

/// Loads the oracle config, resolving relative paths against the config
/// file's directory, and builds the memoized oracle. Remote oracles need
/// chunk texts, so `chunks` is required for that kind.
pub fn build_oracle(
    config_path: &Path,
    chunks: Option<&[Chunk]>,
) -> Result<(MemoizedOracle, OracleConfig)> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut cfg: OracleConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    if let Some(p) = &cfg.labels_path {
        if p.is_relative() {
            cfg.labels_path = Some(base.join(p));
        }
    }
    if let Some(p) = &cfg.prompt_template_path {
        if p.is_relative() {
            cfg.prompt_template_path = Some(base.join(p));
        }
    }
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;

    let oracle = match cfg.kind {
        OracleKind::GroundTruth => {
            let path = cfg.labels_path.as_ref().unwrap();
            MemoizedOracle::new(load_value_oracle(path).map_err(|e| anyhow::anyhow!("{e}"))?)
        }
        OracleKind::LookupFile => {
            let path = cfg.labels_path.as_ref().unwrap();
            MemoizedOracle::new(
                load_lookup_oracle(path, cfg.levels).map_err(|e| anyhow::anyhow!("{e}"))?,
            )
        }
        OracleKind::RemoteHttp => {
            let Some(chunks) = chunks else {
                bail!("remote oracle needs a --chunks file for the texts");
            };
            let texts: HashMap<_, _> = chunks
                .iter()
                .filter_map(|c| c.text.clone().map(|t| (c.chunk_id.clone(), t)))
                .collect();
            if texts.is_empty() {
                bail!("remote oracle: no chunk texts available");
            }
            let template = match &cfg.prompt_template_path {
                Some(p) => std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?,
                None => String::new(),
            };
            MemoizedOracle::new(
                RemoteOracle::new(&cfg, template, texts).map_err(|e| anyhow::anyhow!("{e}"))?,
            )
        }
    };
    Ok((oracle, cfg))
}
