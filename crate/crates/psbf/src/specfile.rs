//! Process-spec files: a TOML document with the variables, named clusterings
//! and per-action edges and CPTs of one process.
//!
//! Node references use variable names: `x3@t` is the time-t copy of state
//! variable `x3`, `x3@t1` its next-slice copy, and a bare `y2` names an
//! observation variable. CPT rows are listed in mixed-radix order of the
//! declared parents, first parent most significant. See `docs/spec-format.md`
//! for the full schema.

use std::collections::HashMap;
use std::path::Path;

use psbf_core::dbn::{ActionDbn, Cpt, Node, VarSpec};
use psbf_core::{Clustering, NamedClustering, Process};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Emit(#[from] toml::ser::Error),
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] psbf_core::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError::Invalid(msg.into()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    name: String,
    state: Vec<VarEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    obs: Vec<VarEntry>,
    #[serde(default, rename = "clustering", skip_serializing_if = "Vec::is_empty")]
    clusterings: Vec<ClusteringEntry>,
    #[serde(rename = "action")]
    actions: Vec<ActionEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarEntry {
    name: String,
    domain: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusteringEntry {
    name: String,
    clusters: Vec<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionEntry {
    name: String,
    edges: Vec<(String, String)>,
    #[serde(rename = "cpt")]
    cpts: Vec<CptEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CptEntry {
    child: String,
    parents: Vec<String>,
    rows: Vec<Vec<f64>>,
}

struct Names<'a> {
    state: &'a [VarSpec],
    obs: &'a [VarSpec],
    state_index: HashMap<&'a str, usize>,
    obs_index: HashMap<&'a str, usize>,
}

impl<'a> Names<'a> {
    fn new(state: &'a [VarSpec], obs: &'a [VarSpec]) -> Result<Self, FormatError> {
        let mut state_index = HashMap::new();
        let mut obs_index = HashMap::new();
        for (i, v) in state.iter().enumerate() {
            check_name(&v.name)?;
            if state_index.insert(v.name.as_str(), i).is_some() {
                return invalid(format!("duplicate variable name `{}`", v.name));
            }
        }
        for (j, v) in obs.iter().enumerate() {
            check_name(&v.name)?;
            if state_index.contains_key(v.name.as_str()) || obs_index.insert(v.name.as_str(), j).is_some() {
                return invalid(format!("duplicate variable name `{}`", v.name));
            }
        }
        Ok(Self {
            state,
            obs,
            state_index,
            obs_index,
        })
    }

    fn parse(&self, r: &str) -> Result<Node, FormatError> {
        let state = |name: &str| {
            self.state_index
                .get(name)
                .copied()
                .ok_or_else(|| FormatError::Invalid(format!("unknown state variable in `{r}`")))
        };
        if let Some(name) = r.strip_suffix("@t1") {
            return Ok(Node::Next(state(name)?));
        }
        if let Some(name) = r.strip_suffix("@t") {
            return Ok(Node::Now(state(name)?));
        }
        match self.obs_index.get(r) {
            Some(&j) => Ok(Node::Obs(j)),
            None if self.state_index.contains_key(r) => {
                invalid(format!("state variable reference `{r}` needs an @t or @t1 suffix"))
            }
            None => invalid(format!("unknown node `{r}`")),
        }
    }

    fn show(&self, node: Node) -> String {
        match node {
            Node::Now(i) => format!("{}@t", self.state[i].name),
            Node::Next(i) => format!("{}@t1", self.state[i].name),
            Node::Obs(j) => self.obs[j].name.clone(),
        }
    }
}

fn check_name(name: &str) -> Result<(), FormatError> {
    let ok = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-');
    if ok {
        Ok(())
    } else {
        invalid(format!("invalid variable name `{name}` (use letters, digits, `_`, `.`, `-`)"))
    }
}

fn vars(entries: Vec<VarEntry>) -> Result<Vec<VarSpec>, FormatError> {
    entries
        .into_iter()
        .map(|e| {
            if e.domain == 0 {
                invalid(format!("variable `{}` has an empty domain", e.name))
            } else {
                Ok(VarSpec::new(e.name, e.domain))
            }
        })
        .collect()
}

fn action(entry: ActionEntry, names: &Names<'_>) -> Result<ActionDbn, FormatError> {
    let edges = entry
        .edges
        .iter()
        .map(|(a, b)| Ok((names.parse(a)?, names.parse(b)?)))
        .collect::<Result<Vec<_>, FormatError>>()?;
    let mut cpts = Vec::with_capacity(entry.cpts.len());
    for c in entry.cpts {
        let child = names.parse(&c.child)?;
        let width = match child {
            Node::Next(i) => names.state[i].domain,
            Node::Obs(j) => names.obs[j].domain,
            Node::Now(_) => return invalid(format!("action `{}`: CPT child `{}` is a time-t node", entry.name, c.child)),
        };
        let parents = c.parents.iter().map(|p| names.parse(p)).collect::<Result<Vec<_>, _>>()?;
        let mut probs = Vec::with_capacity(c.rows.len() * width);
        for (r, row) in c.rows.into_iter().enumerate() {
            if row.len() != width {
                return invalid(format!(
                    "action `{}`: CPT of `{}` row {r} has {} entries, expected {width}",
                    entry.name,
                    c.child,
                    row.len()
                ));
            }
            probs.extend(row);
        }
        cpts.push(Cpt::new(child, parents, probs));
    }
    Ok(ActionDbn::new(entry.name, names.state.to_vec(), names.obs.to_vec(), edges, cpts)?)
}

/// Parses a process-spec document. Structural problems inside the DBNs
/// (cycles, unnormalized rows, ...) are left to [`ActionDbn::validate`].
pub fn parse(text: &str) -> Result<Process, FormatError> {
    let doc: SpecDoc = toml::from_str(text)?;
    let state = vars(doc.state)?;
    let obs = vars(doc.obs)?;
    let names = Names::new(&state, &obs)?;
    if doc.actions.is_empty() {
        return invalid("a process needs at least one action");
    }
    let mut actions = Vec::with_capacity(doc.actions.len());
    for a in doc.actions {
        if actions.iter().any(|d: &ActionDbn| d.name() == a.name) {
            return invalid(format!("duplicate action name `{}`", a.name));
        }
        actions.push(action(a, &names)?);
    }
    let mut clusterings = Vec::with_capacity(doc.clusterings.len());
    for c in doc.clusterings {
        let clusters = c
            .clusters
            .iter()
            .map(|members| {
                members
                    .iter()
                    .map(|m| {
                        names
                            .state_index
                            .get(m.as_str())
                            .copied()
                            .ok_or_else(|| FormatError::Invalid(format!("clustering `{}`: unknown variable `{m}`", c.name)))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let clustering = Clustering::new(state.len(), clusters)?;
        clusterings.push(NamedClustering {
            name: c.name,
            clustering,
        });
    }
    Ok(Process::new(doc.name, state, obs, actions, clusterings)?)
}

pub fn emit(process: &Process) -> Result<String, FormatError> {
    let names = Names::new(process.state_vars(), process.obs_vars())?;
    let entry = |v: &VarSpec| VarEntry {
        name: v.name.clone(),
        domain: v.domain,
    };
    let doc = SpecDoc {
        name: process.name().to_owned(),
        state: process.state_vars().iter().map(entry).collect(),
        obs: process.obs_vars().iter().map(entry).collect(),
        clusterings: process
            .clusterings()
            .iter()
            .map(|c| ClusteringEntry {
                name: c.name.clone(),
                clusters: c
                    .clustering
                    .clusters()
                    .iter()
                    .map(|k| k.iter().map(|&i| process.state_vars()[i].name.clone()).collect())
                    .collect(),
            })
            .collect(),
        actions: process
            .actions()
            .iter()
            .map(|a| ActionEntry {
                name: a.name().to_owned(),
                edges: a.edges().iter().map(|&(x, y)| (names.show(x), names.show(y))).collect(),
                cpts: a
                    .cpts()
                    .iter()
                    .map(|c| CptEntry {
                        child: names.show(c.child()),
                        parents: c.parents().iter().map(|&p| names.show(p)).collect(),
                        rows: c.probs().chunks(c.child_domain().max(1)).map(<[f64]>::to_vec).collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(toml::to_string(&doc)?)
}

pub fn read(path: &Path) -> Result<Process, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

pub fn write(path: &Path, process: &Process) -> Result<(), FormatError> {
    std::fs::write(path, emit(process)?).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}
