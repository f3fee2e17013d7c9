use crate::error::{Error, Result};

/// `n_clients` clients split into `n_groups` contiguous groups.
///
/// Group sizes differ by at most one (earlier groups take the remainder) and
/// each group trains its clients in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_clients: usize,
    assignment: Vec<usize>,
    order: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(n_clients: usize, n_groups: usize) -> Result<Self> {
        if n_clients == 0 {
            return Err(Error::config("n_clients", "must be at least 1"));
        }
        if n_groups == 0 {
            return Err(Error::config("n_groups", "must be at least 1"));
        }
        if n_groups > n_clients {
            return Err(Error::config(
                "n_groups/n_clients",
                format!("n_groups ({n_groups}) exceeds n_clients ({n_clients})"),
            ));
        }
        let base = n_clients / n_groups;
        let extra = n_clients % n_groups;
        let mut order = Vec::with_capacity(n_groups);
        let mut assignment = vec![0; n_clients];
        let mut next = 0;
        for g in 0..n_groups {
            let size = base + usize::from(g < extra);
            let members: Vec<usize> = (next..next + size).collect();
            for &c in &members {
                assignment[c] = g;
            }
            next += size;
            order.push(members);
        }
        Ok(Self {
            n_clients,
            assignment,
            order,
        })
    }

    /// Builds a topology from explicit per-group training orders.
    pub fn from_groups(n_clients: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n_clients];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::config("groups", format!("group {g} is empty")));
            }
            for &c in members {
                if c >= n_clients || assignment[c] != usize::MAX {
                    return Err(Error::config("groups", format!("client {c} invalid or assigned twice")));
                }
                assignment[c] = g;
            }
        }
        if assignment.contains(&usize::MAX) {
            return Err(Error::config("groups", "some client belongs to no group"));
        }
        Ok(Self {
            n_clients,
            assignment,
            order: groups,
        })
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn n_groups(&self) -> usize {
        self.order.len()
    }

    pub fn group_of(&self, client: usize) -> usize {
        self.assignment[client]
    }

    /// Training order within group `g`.
    pub fn group(&self, g: usize) -> &[usize] {
        &self.order[g]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.order
    }
}
