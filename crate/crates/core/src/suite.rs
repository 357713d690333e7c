//! Suites: many instances over a (domain, h, b) grid plus a manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! pools/<domain>.json
//! instances/<domain>/<domain>_h<h>_b<b>.json       public task
//! instances/<domain>/<domain>_h<h>_b<b>.key.json   answer key
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{sample_pool, Domain, ItemPool, DEFAULT_POOL_SIZE};
use crate::generator::{
    generate, key_path_for, nested_allocations, read_instance, task_json, validate, write_instance, write_pool,
    GenConfig, ValidationReport,
};
use crate::harness::{RunLimits, SuiteEntry};
use crate::seed::{derive_seed, rng_from_seed};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct SuitePreset {
    pub domains: Vec<Domain>,
    pub h_values: Vec<usize>,
    pub b_values: Vec<usize>,
    pub k: usize,
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for SuitePreset {
    fn default() -> Self {
        Self {
            domains: Domain::ALL.to_vec(),
            h_values: vec![1, 5, 7, 11, 15, 21],
            b_values: vec![0, 2, 4, 8, 10, 15, 19, 21, 25],
            k: 25,
            pool_size: DEFAULT_POOL_SIZE,
            seed: 42,
        }
    }
}

impl SuitePreset {
    pub fn instance_count(&self) -> usize {
        self.domains.len() * self.h_values.len() * self.b_values.len()
    }

    /// Config for one suite member, without the series allocation.
    pub fn config(&self, domain: Domain, h: usize, b: usize) -> GenConfig {
        let mut c = GenConfig::new(domain, h, b, derive_seed(self.seed, &format!("{domain}/h{h}/b{b}")));
        c.candidates_per_slot = self.k;
        c.clamp_budget = true;
        c
    }

    /// Configs for one (domain, h) series, indexed like `b_values`. Their
    /// decoy allocations refine one another as b grows.
    pub fn series(&self, domain: Domain, h: usize) -> Result<Vec<GenConfig>, String> {
        let mut configs: Vec<GenConfig> = self.b_values.iter().map(|&b| self.config(domain, h, b)).collect();
        let budgets: Vec<usize> = configs.iter().map(GenConfig::effective_budget).collect();
        let mut rng = rng_from_seed(derive_seed(self.seed, &format!("allocation/{domain}/h{h}")));
        let allocations = nested_allocations(h, &budgets, self.k, &mut rng).map_err(|e| e.to_string())?;
        for (c, a) in configs.iter_mut().zip(allocations) {
            c.allocation = Some(a);
        }
        Ok(configs)
    }

    pub fn pool(&self, domain: Domain) -> Result<ItemPool, String> {
        let mut rng = rng_from_seed(derive_seed(self.seed, &format!("pool/{domain}")));
        sample_pool(domain, self.pool_size, &mut rng).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Task file, relative to the manifest's directory.
    pub path: String,
    pub domain: Domain,
    pub h: usize,
    pub b: usize,
    pub seed: u64,
    /// SHA-256 of the task file, empty when generation failed.
    pub sha256: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub k: usize,
    pub limits: RunLimits,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn failures(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.error.is_some())
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| format!("{}: at `{}`: {}", path.display(), e.path(), e.inner()))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn relative_task_path(domain: Domain, h: usize, b: usize) -> String {
    format!("instances/{domain}/{domain}_h{h}_b{b}.json")
}

/// Generates every instance of the preset under `out`. Failed instances are
/// noted in the manifest; the manifest is always written.
pub fn generate_suite(preset: &SuitePreset, out: &Path) -> Result<Manifest, String> {
    let mut pools = Vec::with_capacity(preset.domains.len());
    for &d in &preset.domains {
        let pool = preset.pool(d)?;
        write_pool(&pool, &out.join("pools").join(format!("{d}.json"))).map_err(|e| e.to_string())?;
        pools.push((d, pool));
    }
    let mut jobs: Vec<(usize, GenConfig)> = Vec::with_capacity(preset.instance_count());
    for (di, (domain, _)) in pools.iter().enumerate() {
        for &h in &preset.h_values {
            jobs.extend(preset.series(*domain, h)?.into_iter().map(|c| (di, c)));
        }
    }
    let entries: Vec<ManifestEntry> = jobs
        .par_iter()
        .map(|(di, config)| {
            let pool = &pools[*di].1;
            let rel = relative_task_path(config.domain, config.hidden_count, config.decoy_budget);
            let mut entry = ManifestEntry {
                path: rel.clone(),
                domain: config.domain,
                h: config.hidden_count,
                b: config.decoy_budget,
                seed: config.seed,
                sha256: String::new(),
                error: None,
            };
            let result = generate(config, pool)
                .map_err(|e| e.to_string())
                .and_then(|(inst, key)| {
                    write_instance(&inst, &key, &out.join(&rel)).map_err(|e| e.to_string())?;
                    Ok(sha256_hex(task_json(&inst).as_bytes()))
                });
            match result {
                Ok(hash) => entry.sha256 = hash,
                Err(e) => entry.error = Some(e),
            }
            entry
        })
        .collect();
    let manifest = Manifest {
        seed: preset.seed,
        k: preset.k,
        limits: RunLimits::default(),
        entries,
    };
    manifest.write(out).map_err(|e| e.to_string())?;
    Ok(manifest)
}

/// Task files under `dir`: `*.json` except answer keys, pools, transcripts
/// and the manifest. Sorted.
pub fn find_task_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            if path.is_dir() {
                if name != "pools" && name != "transcripts" {
                    stack.push(path);
                }
            } else if name.ends_with(".json")
                && !name.ends_with(".key.json")
                && !name.ends_with(".transcript.json")
                && name != MANIFEST_FILE
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Outcome of validating one task file.
#[derive(Debug)]
pub struct FileCheck {
    pub path: PathBuf,
    pub result: Result<ValidationReport, String>,
}

impl FileCheck {
    pub fn passed(&self) -> bool {
        matches!(&self.result, Ok(r) if r.passed())
    }
}

pub fn validate_dir(dir: &Path) -> std::io::Result<Vec<FileCheck>> {
    let files = find_task_files(dir)?;
    Ok(files
        .into_par_iter()
        .map(|path| {
            let result = if key_path_for(&path).exists() {
                read_instance(&path)
                    .map(|(i, k)| validate(&i, &k))
                    .map_err(|e| e.to_string())
            } else {
                Err(format!("answer key {} is missing", key_path_for(&path).display()))
            };
            FileCheck { path, result }
        })
        .collect())
}

/// Loads the manifest's instances, keeping those that pass `keep`.
pub fn load_entries(
    manifest_path: &Path,
    keep: impl Fn(&ManifestEntry) -> bool,
) -> Result<(Manifest, Vec<SuiteEntry>), String> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for e in manifest.entries.iter().filter(|e| e.error.is_none() && keep(e)) {
        let (instance, key) = read_instance(&base.join(&e.path)).map_err(|err| err.to_string())?;
        entries.push(SuiteEntry {
            path: e.path.clone(),
            instance,
            key,
        });
    }
    Ok((manifest, entries))
}
