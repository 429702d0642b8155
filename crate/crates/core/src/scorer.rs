//! The network's cluster-ranking scores exposed through the decoder's
//! [`Scorer`] interface.

use std::collections::HashMap;

use crate::corpus::{bucket_cluster_size, bucket_distance, Document, SIZE_BUCKETS};
use crate::decoder::{ClusterState, Scorer};
use crate::encoder::Mentions;
use crate::error::Result;
use crate::model::Model;
use crate::numcore::{Graph, Tensor, Var};

/// Scores for the pruned mentions of one document.
///
/// In recording mode every score stays on the tape so a loss can be built
/// from it; otherwise pairwise work is done on scratch nodes that are
/// discarded right away.
pub struct NeuralScorer<'a, 'p> {
    g: &'a mut Graph<'p>,
    model: &'a Model,
    record: bool,
    reprs: Var,
    scores: Var,
    /// `[k, n_eps]`, `s_m` folded into every class except NO.
    eps: Var,
    /// Salience logits, one row per (mention, position bucket).
    salience: Var,
    salience_buckets: usize,
    repr_values: Vec<Vec<f64>>,
    score_values: Vec<f64>,
    eps_values: Vec<Vec<f64>>,
    salience_values: Vec<f64>,
    speakers: Vec<String>,
    genre: usize,
    states: HashMap<Vec<usize>, (Var, Var)>,
    /// Full cluster scores `[c, 1]` per mention, filled in recording mode.
    pub cluster_vars: Vec<Option<Var>>,
}

impl<'a, 'p> NeuralScorer<'a, 'p> {
    pub fn new(
        g: &'a mut Graph<'p>,
        model: &'a Model,
        doc: &Document,
        mentions: &Mentions,
        record: bool,
    ) -> Result<Self> {
        let k = mentions.len();
        let n_eps = model.config.layout().len();
        let c = &model.config;

        let raw = model.epsilon_scorer.forward(g, mentions.reprs, c.ffnn_dropout)?;
        let mut mask = vec![1.0; n_eps];
        mask[0] = 0.0;
        let mask = g.input(Tensor::matrix(1, n_eps, mask));
        let folded = g.matmul(mentions.scores, mask)?;
        let eps = g.add(raw, folded)?;

        let (salience, salience_buckets) = match model.position_emb {
            Some(p) => {
                let rows: Vec<usize> = (0..k).flat_map(|m| std::iter::repeat_n(m, SIZE_BUCKETS)).collect();
                let buckets: Vec<usize> = (0..k).flat_map(|_| 0..SIZE_BUCKETS).collect();
                let r = g.gather_rows(mentions.reprs, &rows);
                let table = g.param(p);
                let pos = g.gather_rows(table, &buckets);
                let input = g.concat_cols(&[r, pos])?;
                (model.salience_scorer.forward(g, input, c.ffnn_dropout)?, SIZE_BUCKETS)
            }
            None => (model.salience_scorer.forward(g, mentions.reprs, c.ffnn_dropout)?, 1),
        };

        let rv = g.value(mentions.reprs);
        let repr_values = (0..k).map(|i| rv.row(i).to_vec()).collect();
        let score_values = g.value(mentions.scores).data().to_vec();
        let ev = g.value(eps);
        let eps_values = (0..k).map(|i| ev.row(i).to_vec()).collect();
        let salience_values = g.value(salience).data().to_vec();
        let speakers = mentions
            .spans
            .iter()
            .map(|s| doc.tokens[s.start].speaker.clone())
            .collect();
        Ok(NeuralScorer {
            g,
            model,
            record,
            reprs: mentions.reprs,
            scores: mentions.scores,
            eps,
            salience,
            salience_buckets,
            repr_values,
            score_values,
            eps_values,
            salience_values,
            speakers,
            genre: model.genre_index(&doc.genre),
            states: HashMap::new(),
            cluster_vars: vec![None; k],
        })
    }

    pub fn graph(&mut self) -> &mut Graph<'p> {
        self.g
    }

    fn salience_row(&self, m: usize, position: usize) -> Result<usize> {
        Ok(if self.salience_buckets == 1 {
            m
        } else {
            m * self.salience_buckets + bucket_cluster_size(position as i64)?
        })
    }

    /// `[1, n_eps]` ε scores of mention `i` on the tape.
    pub fn epsilon_var(&mut self, i: usize) -> Var {
        self.g.slice_rows(self.eps, i, 1)
    }

    /// Attention-pooled `(C*, s_c)` of a member list on the tape, cached.
    pub fn state_vars(&mut self, members: &[usize]) -> Result<(Var, Var)> {
        if let Some(v) = self.states.get(members) {
            return Ok(*v);
        }
        let idx = members
            .iter()
            .enumerate()
            .map(|(p, &m)| self.salience_row(m, p + 1))
            .collect::<Result<Vec<_>>>()?;
        let g = &mut *self.g;
        let beta = g.gather_rows(self.salience, &idx);
        let w = g.softmax(beta)?;
        let wt = g.transpose(w);
        let r = g.gather_rows(self.reprs, members);
        let s = g.gather_rows(self.scores, members);
        let cstar = g.matmul(wt, r)?;
        let sc = g.matmul(wt, s)?;
        self.states.insert(members.to_vec(), (cstar, sc));
        Ok((cstar, sc))
    }

    /// Embedded pair and cluster features `[c, 4f]` for mention `i`
    /// against clusters given by their member lists.
    fn features(&mut self, i: usize, members: &[&[usize]]) -> Result<Var> {
        let c = members.len();
        let mut same = Vec::with_capacity(c);
        let mut dist = Vec::with_capacity(c);
        let mut size = Vec::with_capacity(c);
        for m in members {
            let newest = *m.last().expect("cluster has members");
            same.push(usize::from(self.speakers[i] == self.speakers[newest]));
            dist.push(bucket_distance(i as i64 - newest as i64)?);
            size.push(bucket_cluster_size(m.len() as i64)?);
        }
        let model = self.model;
        let g = &mut *self.g;
        let tables = [
            (model.genre_emb, vec![self.genre; c]),
            (model.speaker_emb, same),
            (model.distance_emb, dist),
            (model.size_emb, size),
        ];
        let mut parts = Vec::with_capacity(4);
        for (p, idx) in tables {
            let t = g.param(p);
            parts.push(g.gather_rows(t, &idx));
        }
        g.concat_cols(&parts)
    }

    /// `s_mc(i, ·)` for stacked cluster representations `cstars [c, D]`.
    fn pair_var(&mut self, i: usize, cstars: Var, members: &[&[usize]]) -> Result<Var> {
        let feats = self.features(i, members)?;
        let g = &mut *self.g;
        let ni = g.gather_rows(self.reprs, &vec![i; members.len()]);
        let prod = g.mul(ni, cstars)?;
        let f = g.concat_cols(&[ni, cstars, prod, feats])?;
        self.model
            .pair_scorer
            .forward(g, f, self.model.config.ffnn_dropout)
    }

    /// Full cluster scores `s_m(i) + s_c(j) + s_mc(i, j)` as `[c, 1]` on the
    /// tape for clusters given by member lists.
    pub fn cluster_scores(&mut self, i: usize, members: &[&[usize]]) -> Result<Var> {
        let mut cstars = Vec::with_capacity(members.len());
        let mut scs = Vec::with_capacity(members.len());
        for m in members {
            let (c, s) = self.state_vars(m)?;
            cstars.push(c);
            scs.push(s);
        }
        let cs = self.g.concat_rows(&cstars)?;
        let smc = self.pair_var(i, cs, members)?;
        let g = &mut *self.g;
        let sc = g.concat_rows(&scs)?;
        let sm = g.gather_rows(self.scores, &vec![i; members.len()]);
        let total = g.add(sm, sc)?;
        g.add(total, smc)
    }

    /// `[n_eps + c, 1]` candidate scores, ε classes first.
    pub fn candidate_scores(&mut self, i: usize, clusters: Option<Var>) -> Result<Var> {
        let eps = self.epsilon_var(i);
        let eps = self.g.transpose(eps);
        match clusters {
            Some(c) => self.g.concat_rows(&[eps, c]),
            None => Ok(eps),
        }
    }
}

impl Scorer for NeuralScorer<'_, '_> {
    fn num_mentions(&self) -> usize {
        self.score_values.len()
    }

    fn mention_score(&self, i: usize) -> f64 {
        self.score_values[i]
    }

    fn repr(&self, i: usize) -> &[f64] {
        &self.repr_values[i]
    }

    fn epsilon_scores(&mut self, i: usize) -> Result<Vec<f64>> {
        Ok(self.eps_values[i].clone())
    }

    fn salience(&mut self, m: usize, position: usize) -> Result<f64> {
        Ok(self.salience_values[self.salience_row(m, position)?])
    }

    fn pair_scores(&mut self, i: usize, states: &[&ClusterState]) -> Result<Vec<f64>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let members: Vec<&[usize]> = states.iter().map(|s| s.members.as_slice()).collect();
        if self.record {
            let total = self.cluster_scores(i, &members)?;
            let totals = self.g.value(total).data().to_vec();
            self.cluster_vars[i] = Some(total);
            // the decoder adds s_m and s_c itself
            return Ok(totals
                .iter()
                .zip(states)
                .map(|(t, s)| t - self.score_values[i] - s.score)
                .collect());
        }
        let mark = self.g.len();
        let dim = self.repr_values[0].len();
        let mut data = Vec::with_capacity(states.len() * dim);
        for s in states {
            data.extend_from_slice(&s.repr);
        }
        let cs = self.g.input(Tensor::matrix(states.len(), dim, data));
        let smc = self.pair_var(i, cs, &members)?;
        let out = self.g.value(smc).data().to_vec();
        self.g.truncate(mark);
        Ok(out)
    }
}
