use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beamfocus::BeamfocusingMatrix;
use crate::dnn::{decode_network, encode_network, Network};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::td3::Policy;

pub const LIBRARY_VERSION: u32 = 1;
const INDEX_FILE: &str = "library.toml";
const ENTRY_MANIFEST: &str = "manifest.toml";
const NETWORK_FILES: [&str; 6] = [
    "actor",
    "critic1",
    "critic2",
    "target_actor",
    "target_critic1",
    "target_critic2",
];

/// Trained policies for one focal point.
#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    pub dfp: Point3,
    /// One policy per subarray.
    pub policies: Vec<Policy>,
    pub pdis: Vec<BeamfocusingMatrix>,
    pub seed: u64,
    pub budget: u64,
    /// Mean oracle-normalized power of the final greedy submatrices.
    pub achieved_power: f64,
    pub learning_rate: f64,
}

/// Append-only store of [`LibraryEntry`] values in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyLibrary {
    entries: Vec<LibraryEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    version: u32,
    entries: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryManifest {
    version: u32,
    dfp_m: Point3,
    seed: u64,
    budget: u64,
    achieved_power: f64,
    learning_rate: f64,
    subarrays: Vec<SubarrayManifest>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubarrayManifest {
    index: usize,
    pdi: BeamfocusingMatrix,
}

impl PolicyLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> Option<&LibraryEntry> {
        self.entries.get(i)
    }

    pub fn push(&mut self, entry: LibraryEntry) -> Result<()> {
        if self.entries.iter().any(|e| e.dfp == entry.dfp) {
            return Err(Error::domain(format!(
                "library already holds focal point {}",
                entry.dfp
            )));
        }
        if entry.policies.len() != entry.pdis.len() {
            return Err(Error::Dimension {
                expected: entry.policies.len(),
                actual: entry.pdis.len(),
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Writes `path/library.toml` and one `entry-NNNN` directory per entry.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
        for (i, e) in self.entries.iter().enumerate() {
            let dir = path.join(format!("entry-{i:04}"));
            fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
            let manifest = EntryManifest {
                version: LIBRARY_VERSION,
                dfp_m: e.dfp,
                seed: e.seed,
                budget: e.budget,
                achieved_power: e.achieved_power,
                learning_rate: e.learning_rate,
                subarrays: e
                    .pdis
                    .iter()
                    .enumerate()
                    .map(|(index, pdi)| SubarrayManifest {
                        index,
                        pdi: pdi.clone(),
                    })
                    .collect(),
            };
            write_toml(&dir.join(ENTRY_MANIFEST), &manifest)?;
            for (m, p) in e.policies.iter().enumerate() {
                for (name, net) in NETWORK_FILES.iter().zip(networks(p)) {
                    let file = dir.join(format!("sub-{m:04}-{name}.nfn"));
                    fs::write(&file, encode_network(net)).map_err(|err| Error::io(&file, err))?;
                }
            }
        }
        write_toml(
            &path.join(INDEX_FILE),
            &IndexFile {
                version: LIBRARY_VERSION,
                entries: self.entries.len(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let index: IndexFile = read_toml(&path.join(INDEX_FILE))?;
        if index.version != LIBRARY_VERSION {
            return Err(Error::format(
                path.join(INDEX_FILE),
                format!("unsupported library version {}", index.version),
            ));
        }
        let mut lib = PolicyLibrary::new();
        for i in 0..index.entries {
            let dir = path.join(format!("entry-{i:04}"));
            let manifest_path = dir.join(ENTRY_MANIFEST);
            let m: EntryManifest = read_toml(&manifest_path)?;
            if m.version != LIBRARY_VERSION {
                return Err(Error::format(
                    &manifest_path,
                    format!("unsupported entry version {}", m.version),
                ));
            }
            let mut policies = Vec::with_capacity(m.subarrays.len());
            let mut pdis = Vec::with_capacity(m.subarrays.len());
            for (k, s) in m.subarrays.into_iter().enumerate() {
                if s.index != k {
                    return Err(Error::format(
                        &manifest_path,
                        format!("subarray {} listed at position {k}", s.index),
                    ));
                }
                let mut nets = Vec::with_capacity(NETWORK_FILES.len());
                for name in NETWORK_FILES {
                    let file = dir.join(format!("sub-{k:04}-{name}.nfn"));
                    let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
                    nets.push(decode_network(&bytes).map_err(|msg| Error::format(&file, msg))?);
                }
                let mut it = nets.into_iter();
                let mut next = || it.next().expect("six networks per policy");
                let (actor, c1, c2, ta, tc1, tc2) = (next(), next(), next(), next(), next(), next());
                let policy = Policy::from_networks(actor, [c1, c2], ta, [tc1, tc2], m.learning_rate)
                    .map_err(|e| Error::format(&dir, format!("subarray {k}: {e}")))?;
                if policy.n_prime() != s.pdi.len() {
                    return Err(Error::format(
                        &dir,
                        format!(
                            "subarray {k}: policy has {} inputs for a {}-element PDI",
                            policy.n_prime(),
                            s.pdi.len()
                        ),
                    ));
                }
                policies.push(policy);
                pdis.push(s.pdi);
            }
            lib.push(LibraryEntry {
                dfp: m.dfp_m,
                policies,
                pdis,
                seed: m.seed,
                budget: m.budget,
                achieved_power: m.achieved_power,
                learning_rate: m.learning_rate,
            })
            .map_err(|e| Error::format(&dir, e.to_string()))?;
        }
        Ok(lib)
    }
}

fn networks(p: &Policy) -> [&Network; 6] {
    [
        &p.actor,
        &p.critics[0],
        &p.critics[1],
        &p.target_actor,
        &p.target_critics[0],
        &p.target_critics[1],
    ]
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}
