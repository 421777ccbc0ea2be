//! JSON form of staged trees.
//!
//! ```json
//! {"order": ["X1", "X2"], "levels": {"X1": ["0", "1"], "X2": ["0", "1"]},
//!  "staging": [[0], [0, 0]], "params": [{"0": [0.5, 0.5]}, {"0": [0.3, 0.7]}]}
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{StageId, StagedTree, Staging, VariableMeta};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub order: Vec<String>,
    pub levels: BTreeMap<String, Vec<String>>,
    pub staging: Vec<Vec<StageId>>,
    /// Per depth, stage id → probability vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<BTreeMap<StageId, Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl From<&StagedTree> for ModelJson {
    fn from(tree: &StagedTree) -> Self {
        ModelJson {
            order: tree.vars().iter().map(|v| v.name.clone()).collect(),
            levels: tree
                .vars()
                .iter()
                .map(|v| (v.name.clone(), v.levels.clone()))
                .collect(),
            staging: tree.staging().strata().to_vec(),
            params: tree.params().map(|params| {
                params
                    .iter()
                    .map(|depth| {
                        depth
                            .iter()
                            .enumerate()
                            .map(|(s, v)| (s as StageId, v.clone()))
                            .collect()
                    })
                    .collect()
            }),
            interior: tree.params().map(|_| tree.is_interior()),
            meta: None,
        }
    }
}

impl TryFrom<&ModelJson> for StagedTree {
    type Error = Error;

    fn try_from(json: &ModelJson) -> Result<StagedTree> {
        let vars = json
            .order
            .iter()
            .map(|name| {
                let levels = json.levels.get(name).ok_or_else(|| Error::InvalidVariable {
                    name: name.clone(),
                    reason: "no levels given".into(),
                })?;
                VariableMeta::new(name.clone(), levels.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let tree = StagedTree::new(vars, Staging::new(json.staging.clone()))?;
        let Some(params) = &json.params else {
            return Ok(tree);
        };
        if params.len() != tree.p() {
            return Err(Error::InvalidTree(format!(
                "{} parameter strata for {} variables",
                params.len(),
                tree.p()
            )));
        }
        let dense = params
            .iter()
            .enumerate()
            .map(|(d, map)| {
                (0..tree.n_stages(d) as StageId)
                    .map(|s| {
                        map.get(&s).cloned().ok_or_else(|| {
                            Error::InvalidTree(format!("no parameters for stage {s} at depth {d}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        tree.with_params(dense, json.interior.unwrap_or(false))
    }
}

pub fn tree_to_json_string(tree: &StagedTree) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelJson::from(tree))?)
}

pub fn tree_from_json_str(s: &str) -> Result<StagedTree> {
    StagedTree::try_from(&serde_json::from_str::<ModelJson>(s)?)
}

pub fn read_tree<R: Read>(reader: R) -> Result<StagedTree> {
    StagedTree::try_from(&serde_json::from_reader::<_, ModelJson>(reader)?)
}

pub fn read_tree_path(path: impl AsRef<Path>) -> Result<StagedTree> {
    read_tree(BufReader::new(File::open(path)?))
}

pub fn write_json_path<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_tree_path(path: impl AsRef<Path>, tree: &StagedTree) -> Result<()> {
    write_json_path(path, &ModelJson::from(tree))
}
