use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{ResponseId, ResponseRecord};
use crate::error::{Error, Result};
use crate::simcluster::Cluster;

pub type ClassId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResponseClass {
    pub class_id: ClassId,
    pub name: String,
    /// The text served whenever this class is predicted.
    pub exemplar_text: String,
    pub members: BTreeSet<ResponseId>,
    pub source_clusters: BTreeSet<u32>,
}

/// Curated response classes.
///
/// `version` increases on every mutation. `structural_version` records the
/// last version at which class membership or the class set changed; a model
/// trained at any version since then is still valid for this bank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResponseBank {
    pub version: u64,
    #[serde(default)]
    pub structural_version: u64,
    pub classes: Vec<ResponseClass>,
}

impl ResponseBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, id: ClassId) -> Result<&ResponseClass> {
        self.classes.get(id as usize).ok_or(Error::UnknownClass(id))
    }

    pub fn exemplar(&self, id: ClassId) -> Result<&str> {
        Ok(&self.class(id)?.exemplar_text)
    }

    /// Response id to class id.
    pub fn membership(&self) -> HashMap<ResponseId, ClassId> {
        self.classes
            .iter()
            .flat_map(|c| c.members.iter().map(move |&m| (m, c.class_id)))
            .collect()
    }

    /// Whether a model trained against `model_version` of this bank still
    /// applies: no structural change happened after it.
    pub fn accepts_model_version(&self, model_version: u64) -> bool {
        self.structural_version <= model_version && model_version <= self.version
    }

    fn bump_structure(&mut self) {
        self.version += 1;
        self.structural_version = self.version;
    }

    pub fn create_class(
        &mut self,
        name: &str,
        exemplar: &str,
        members: impl IntoIterator<Item = ResponseId>,
        source_cluster: Option<u32>,
    ) -> Result<ClassId> {
        if exemplar.trim().is_empty() {
            return Err(Error::validation("exemplar text must be non-empty"));
        }
        let members: BTreeSet<ResponseId> = members.into_iter().collect();
        if members.is_empty() {
            return Err(Error::validation("a response class needs at least one member"));
        }
        self.check_disjoint(&members)?;
        let class_id = self.classes.len() as ClassId;
        self.classes.push(ResponseClass {
            class_id,
            name: if name.trim().is_empty() {
                exemplar.to_string()
            } else {
                name.to_string()
            },
            exemplar_text: exemplar.to_string(),
            members,
            source_clusters: source_cluster.into_iter().collect(),
        });
        self.bump_structure();
        Ok(class_id)
    }

    pub fn assign(
        &mut self,
        class_id: ClassId,
        members: impl IntoIterator<Item = ResponseId>,
        source_cluster: Option<u32>,
    ) -> Result<()> {
        self.class(class_id)?;
        let members: BTreeSet<ResponseId> = members.into_iter().collect();
        self.check_disjoint(&members)?;
        let class = &mut self.classes[class_id as usize];
        class.members.extend(members);
        class.source_clusters.extend(source_cluster);
        self.bump_structure();
        Ok(())
    }

    /// Replace a class's exemplar. Membership is untouched, so trained
    /// models remain valid. Re-setting the same text still bumps the version.
    pub fn edit_exemplar(&mut self, class_id: ClassId, text: &str) -> Result<()> {
        if text.trim().is_empty() {
            return Err(Error::validation("exemplar text must be non-empty"));
        }
        self.class(class_id)?;
        self.classes[class_id as usize].exemplar_text = text.to_string();
        self.version += 1;
        Ok(())
    }

    fn check_disjoint(&self, members: &BTreeSet<ResponseId>) -> Result<()> {
        for c in &self.classes {
            if let Some(m) = c.members.intersection(members).next() {
                return Err(Error::validation(format!(
                    "response {m} already belongs to class {}",
                    c.class_id
                )));
            }
        }
        Ok(())
    }

    /// Check dense ids, non-empty exemplars and member disjointness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, c) in self.classes.iter().enumerate() {
            if c.class_id as usize != i {
                return Err(Error::validation(format!("class ids must be dense; found {} at {i}", c.class_id)));
            }
            if c.exemplar_text.trim().is_empty() {
                return Err(Error::validation(format!("class {i} has an empty exemplar")));
            }
            if c.members.is_empty() {
                return Err(Error::validation(format!("class {i} has no members")));
            }
            for &m in &c.members {
                if !seen.insert(m) {
                    return Err(Error::validation(format!("response {m} is in two classes")));
                }
            }
        }
        if self.structural_version > self.version {
            return Err(Error::validation("structural version exceeds version"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let bank: Self = serde_json::from_str(s)?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Write via a temporary file and rename, so readers never see a
    /// partially written bank.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

/// One class per cluster, exemplar = centroid text. Used when no manual
/// merging is done.
pub fn auto_bank(clusters: &[Cluster], records: &[ResponseRecord]) -> Result<ResponseBank> {
    let mut bank = ResponseBank::new();
    for c in clusters {
        let centroid = records
            .get(c.centroid_id as usize)
            .ok_or_else(|| Error::validation(format!("unknown centroid {}", c.centroid_id)))?;
        bank.create_class(
            centroid.text(),
            centroid.text(),
            c.members.iter().copied(),
            Some(c.cluster_id),
        )?;
    }
    // a freshly built bank counts as a single structural revision
    if !bank.is_empty() {
        bank.version = 1;
        bank.structural_version = 1;
    }
    Ok(bank)
}

/// For each old class, the new class holding most of its members (ties go
/// to the smaller new id); `None` when no member survived.
pub fn class_id_mapping(old: &ResponseBank, new: &ResponseBank) -> Vec<(ClassId, Option<ClassId>)> {
    let membership = new.membership();
    old.classes
        .iter()
        .map(|c| {
            let mut votes: HashMap<ClassId, usize> = HashMap::new();
            for m in &c.members {
                if let Some(&nc) = membership.get(m) {
                    *votes.entry(nc).or_default() += 1;
                }
            }
            let best = votes
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(id, _)| id);
            (c.class_id, best)
        })
        .collect()
}
