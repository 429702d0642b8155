use crate::error::{Error, Result};
use crate::numcore::softmax;

/// Index of a cluster state in a [`ClusterStore`]; states are never removed,
/// so ids are also creation order.
pub type StateId = usize;

/// A (possibly historical) partial entity.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState {
    pub id: StateId,
    /// Member mention indices in attachment order.
    pub members: Vec<usize>,
    /// Salience logits β(m), one per member.
    pub salience: Vec<f64>,
    /// Attention weights, softmax of `salience`.
    pub weights: Vec<f64>,
    /// Attention-weighted mention representation.
    pub repr: Vec<f64>,
    /// Attention-weighted mention score.
    pub score: f64,
    /// Newest version of this entity; `id` itself while live.
    pub latest: StateId,
}

impl ClusterState {
    pub fn build(
        id: StateId,
        members: Vec<usize>,
        salience: Vec<f64>,
        reprs: &[&[f64]],
        scores: &[f64],
    ) -> Self {
        debug_assert_eq!(members.len(), salience.len());
        let weights = softmax(&salience).expect("cluster has members");
        let dim = reprs.first().map_or(0, |r| r.len());
        let mut repr = vec![0.0; dim];
        let mut score = 0.0;
        for (k, w) in weights.iter().enumerate() {
            for (o, v) in repr.iter_mut().zip(reprs[k]) {
                *o += w * v;
            }
            score += w * scores[k];
        }
        ClusterState {
            id,
            members,
            salience,
            weights,
            repr,
            score,
            latest: id,
        }
    }

    pub fn is_live(&self) -> bool {
        self.latest == self.id
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Most recently attached member.
    pub fn newest(&self) -> usize {
        *self.members.last().expect("cluster has members")
    }
}

/// Every cluster state created during one decoding pass.
#[derive(Clone, Debug, Default)]
pub struct ClusterStore {
    states: Vec<ClusterState>,
}

impl ClusterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, id: StateId) -> Result<&ClusterState> {
        self.states.get(id).ok_or(Error::UnknownState(id))
    }

    pub fn states(&self) -> &[ClusterState] {
        &self.states
    }

    pub fn live(&self) -> impl Iterator<Item = &ClusterState> {
        self.states.iter().filter(|s| s.is_live())
    }

    /// Follows `latest` pointers to the live version of `id`.
    pub fn latest(&self, id: StateId) -> Result<StateId> {
        let mut cur = self.get(id)?;
        let mut hops = 0;
        while !cur.is_live() {
            cur = self.get(cur.latest)?;
            hops += 1;
            debug_assert!(hops <= self.states.len(), "latest-pointer cycle");
        }
        Ok(cur.id)
    }

    /// Scoring window: the `cap` most recent states (live ones only unless
    /// `history`), oldest first.
    pub fn candidates(&self, history: bool, cap: usize) -> Vec<StateId> {
        let mut ids: Vec<StateId> = self
            .states
            .iter()
            .filter(|s| history || s.is_live())
            .map(|s| s.id)
            .collect();
        if ids.len() > cap {
            ids.drain(..ids.len() - cap);
        }
        ids
    }

    /// Starts a new entity with a single mention.
    pub fn create(&mut self, mention: usize, salience: f64, repr: &[f64], score: f64) -> StateId {
        let id = self.states.len();
        self.states
            .push(ClusterState::build(id, vec![mention], vec![salience], &[repr], &[score]));
        id
    }

    /// Adds `mention` to the live version of `target`, creating a new state
    /// and pointing every older version of the entity at it. `reprs` and
    /// `scores` are looked up per member.
    pub fn extend<'a>(
        &mut self,
        target: StateId,
        mention: usize,
        salience: f64,
        repr_of: impl Fn(usize) -> &'a [f64],
        score_of: impl Fn(usize) -> f64,
    ) -> Result<StateId> {
        let live = self.latest(target)?;
        let prev = &self.states[live];
        let mut members = prev.members.clone();
        let mut sal = prev.salience.clone();
        members.push(mention);
        sal.push(salience);
        let reprs: Vec<&[f64]> = members.iter().map(|&m| repr_of(m)).collect();
        let scores: Vec<f64> = members.iter().map(|&m| score_of(m)).collect();
        let id = self.states.len();
        self.states
            .push(ClusterState::build(id, members, sal, &reprs, &scores));
        // every version of this entity points directly at the new live state
        for s in self.states.iter_mut() {
            if s.latest == live {
                s.latest = id;
            }
        }
        self.states[id].latest = id;
        Ok(id)
    }
}
