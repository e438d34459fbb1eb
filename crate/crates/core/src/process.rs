use alloc::string::String;
use alloc::vec::Vec;

use crate::clustering::Clustering;
use crate::dbn::{ActionDbn, ValidationReport, VarSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedClustering {
    pub name: String,
    pub clustering: Clustering,
}

/// A set of action DBNs over shared state and observation variables, with
/// any number of named clusterings.
#[derive(Clone, Debug)]
pub struct Process {
    name: String,
    state: Vec<VarSpec>,
    obs: Vec<VarSpec>,
    actions: Vec<ActionDbn>,
    clusterings: Vec<NamedClustering>,
}

impl Process {
    pub fn new(
        name: impl Into<String>,
        state: Vec<VarSpec>,
        obs: Vec<VarSpec>,
        actions: Vec<ActionDbn>,
        clusterings: Vec<NamedClustering>,
    ) -> Result<Self> {
        for a in &actions {
            if a.state_vars() != state.as_slice() || a.obs_vars() != obs.as_slice() {
                return Err(Error::InvalidParameter(alloc::format!(
                    "action `{}` declares different variables than the process",
                    a.name()
                )));
            }
        }
        for c in &clusterings {
            if c.clustering.num_vars() != state.len() {
                return Err(Error::InvalidClustering(alloc::format!(
                    "clustering `{}` covers {} variables, process has {}",
                    c.name,
                    c.clustering.num_vars(),
                    state.len()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            state,
            obs,
            actions,
            clusterings,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_vars(&self) -> &[VarSpec] {
        &self.state
    }

    pub fn obs_vars(&self) -> &[VarSpec] {
        &self.obs
    }

    pub fn domains(&self) -> Vec<usize> {
        self.state.iter().map(|v| v.domain).collect()
    }

    pub fn actions(&self) -> &[ActionDbn] {
        &self.actions
    }

    pub fn action(&self, name: &str) -> Option<&ActionDbn> {
        self.actions.iter().find(|a| a.name() == name)
    }

    pub fn clusterings(&self) -> &[NamedClustering] {
        &self.clusterings
    }

    pub fn clustering(&self, name: &str) -> Option<&Clustering> {
        self.clusterings.iter().find(|c| c.name == name).map(|c| &c.clustering)
    }

    pub fn set_clustering(&mut self, name: impl Into<String>, clustering: Clustering) {
        let name = name.into();
        match self.clusterings.iter_mut().find(|c| c.name == name) {
            Some(c) => c.clustering = clustering,
            None => self.clusterings.push(NamedClustering { name, clustering }),
        }
    }

    pub fn actions_mut(&mut self) -> &mut Vec<ActionDbn> {
        &mut self.actions
    }

    /// Validation report per action, in declaration order.
    pub fn validate(&self) -> Vec<(String, ValidationReport)> {
        self.actions
            .iter()
            .map(|a| (a.name().into(), a.validate()))
            .collect()
    }
}
