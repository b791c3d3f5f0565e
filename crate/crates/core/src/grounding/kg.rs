use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prob::{Probability, Seed};
use crate::report::SimReport;
use crate::seed::run_trials;

/// Largest `|triples| + delta_test` the radius oracle accepts.
pub const ORACLE_MAX_TRIPLES: usize = 14;
const EXACT_MAX_SLOTS: usize = 22;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        Triple {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub head: String,
    pub relation: String,
}

impl Query {
    pub fn new(head: &str, relation: &str) -> Self {
        Query {
            head: head.to_string(),
            relation: relation.to_string(),
        }
    }
}

/// Small labelled graph scored by direct edges plus half-weighted 2-hop
/// paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyKG {
    entities: BTreeSet<String>,
    triples: BTreeSet<Triple>,
}

impl ToyKG {
    pub fn new<E, T>(entities: E, triples: T) -> Result<Self>
    where
        E: IntoIterator<Item = String>,
        T: IntoIterator<Item = Triple>,
    {
        let entities: BTreeSet<String> = entities.into_iter().collect();
        let mut set = BTreeSet::new();
        for t in triples {
            check_triple(&entities, &t)?;
            if !set.insert(t.clone()) {
                return Err(invalid("triples", format!("duplicate triple {t:?}")));
            }
        }
        Ok(ToyKG {
            entities,
            triples: set,
        })
    }

    /// Entities are the heads and tails of `triples`.
    pub fn from_triples<T: IntoIterator<Item = Triple>>(triples: T) -> Result<Self> {
        let triples: Vec<Triple> = triples.into_iter().collect();
        let entities = triples
            .iter()
            .flat_map(|t| [t.head.clone(), t.tail.clone()])
            .collect::<Vec<_>>();
        ToyKG::new(entities, triples)
    }

    /// Parse `head<TAB>relation<TAB>tail` lines. A single-field line
    /// declares an isolated entity; blank lines and `#` comments are
    /// skipped.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entities = BTreeSet::new();
        let mut triples = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let parse = |reason: &str| Error::Parse {
                line: i + 1,
                reason: reason.to_string(),
            };
            if fields.iter().any(|f| f.is_empty()) {
                return Err(parse("empty field"));
            }
            match fields.as_slice() {
                [e] => {
                    entities.insert(e.to_string());
                }
                [h, r, t] => {
                    if h == t {
                        return Err(parse("self-loop"));
                    }
                    let tr = Triple::new(h, r, t);
                    if !seen.insert(tr.clone()) {
                        return Err(parse("duplicate triple"));
                    }
                    entities.insert(h.to_string());
                    entities.insert(t.to_string());
                    triples.push(tr);
                }
                _ => return Err(parse("expected 1 or 3 tab-separated fields")),
            }
        }
        ToyKG::new(entities, triples)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let used: BTreeSet<&String> = self
            .triples
            .iter()
            .flat_map(|t| [&t.head, &t.tail])
            .collect();
        for e in self.entities.iter().filter(|e| !used.contains(e)) {
            out.push_str(e);
            out.push('\n');
        }
        for t in &self.triples {
            out.push_str(&format!("{}\t{}\t{}\n", t.head, t.relation, t.tail));
        }
        out
    }

    pub fn entities(&self) -> &BTreeSet<String> {
        &self.entities
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn relations(&self) -> BTreeSet<&str> {
        self.triples.iter().map(|t| t.relation.as_str()).collect()
    }
}

fn check_triple(entities: &BTreeSet<String>, t: &Triple) -> Result<()> {
    if !entities.contains(&t.head) || !entities.contains(&t.tail) {
        return Err(invalid(
            "triples",
            format!("{t:?} references an undeclared entity"),
        ));
    }
    if t.head == t.tail {
        return Err(invalid("triples", format!("{t:?} is a self-loop")));
    }
    if t.relation.is_empty() {
        return Err(invalid("triples", "empty relation"));
    }
    Ok(())
}

/// Integer view of a graph: entities and relations indexed in label order.
struct Indexed {
    entities: Vec<String>,
    relations: Vec<String>,
    triples: Vec<[usize; 3]>,
    head: usize,
    relation: usize,
}

impl Indexed {
    fn new(kg: &ToyKG, q: &Query) -> Result<Self> {
        let no_candidate = || Error::NoCandidate {
            head: q.head.clone(),
            relation: q.relation.clone(),
        };
        let entities: Vec<String> = kg.entities.iter().cloned().collect();
        let relations: Vec<String> = kg.relations().into_iter().map(str::to_string).collect();
        let e_ix: BTreeMap<&str, usize> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.as_str(), i))
            .collect();
        let r_ix: BTreeMap<&str, usize> = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.as_str(), i))
            .collect();
        let head = *e_ix.get(q.head.as_str()).ok_or_else(no_candidate)?;
        let relation = *r_ix.get(q.relation.as_str()).ok_or_else(no_candidate)?;
        let triples = kg
            .triples
            .iter()
            .map(|t| {
                [
                    e_ix[t.head.as_str()],
                    r_ix[t.relation.as_str()],
                    e_ix[t.tail.as_str()],
                ]
            })
            .collect();
        Ok(Indexed {
            entities,
            relations,
            triples,
            head,
            relation,
        })
    }
}

/// Triples that can influence the query's ranking, and how.
struct Structure {
    slots: usize,
    /// Candidate entity indices in label order.
    cands: Vec<usize>,
    direct: Vec<(usize, usize)>,
    paths: Vec<(usize, usize, usize)>,
}

impl Structure {
    fn new(triples: &[[usize; 3]], head: usize, relation: usize) -> Self {
        let mut slot_of: BTreeMap<usize, usize> = BTreeMap::new();
        let slot = |i: usize, m: &mut BTreeMap<usize, usize>| {
            let n = m.len();
            *m.entry(i).or_insert(n)
        };
        let mut direct_raw = Vec::new();
        let mut paths_raw = Vec::new();
        for (i, t) in triples.iter().enumerate() {
            if t[0] != head {
                continue;
            }
            if t[1] == relation {
                direct_raw.push((slot(i, &mut slot_of), t[2]));
            }
            for (j, u) in triples.iter().enumerate() {
                if u[0] == t[2] && u[2] != head {
                    let a = slot(i, &mut slot_of);
                    let b = slot(j, &mut slot_of);
                    paths_raw.push((a, b, u[2]));
                }
            }
        }
        let cands: Vec<usize> = direct_raw
            .iter()
            .map(|&(_, e)| e)
            .chain(paths_raw.iter().map(|&(_, _, e)| e))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pos = |e: usize| cands.binary_search(&e).expect("candidate listed");
        Structure {
            slots: slot_of.len(),
            direct: direct_raw.iter().map(|&(s, e)| (s, pos(e))).collect(),
            paths: paths_raw.iter().map(|&(a, b, e)| (a, b, pos(e))).collect(),
            cands,
        }
    }

    /// Top-scoring candidate position, lowest label on ties; `None` when
    /// nothing scores.
    fn top1(&self, retained: impl Fn(usize) -> bool, scores: &mut [u32]) -> Option<usize> {
        scores.iter_mut().for_each(|s| *s = 0);
        for &(s, c) in &self.direct {
            if retained(s) {
                scores[c] += 2;
            }
        }
        for &(a, b, c) in &self.paths {
            if retained(a) && retained(b) {
                scores[c] += 1;
            }
        }
        let mut best = None;
        let mut best_score = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > best_score {
                best_score = s;
                best = Some(c);
            }
        }
        best
    }

    /// Exact probabilities of each candidate winning, plus abstention,
    /// when every triple is kept independently with probability `p`.
    fn exact(&self, p: f64) -> (Vec<f64>, f64) {
        let s = self.slots;
        let keep: Vec<f64> = (0..=s).map(|k| p.powi(k as i32)).collect();
        let drop: Vec<f64> = (0..=s).map(|k| (1.0 - p).powi(k as i32)).collect();
        let mut probs = vec![0.0; self.cands.len()];
        let mut abstain = 0.0;
        let mut scores = vec![0u32; self.cands.len()];
        for mask in 0u64..(1u64 << s) {
            let k = mask.count_ones() as usize;
            let w = keep[k] * drop[s - k];
            match self.top1(|i| mask >> i & 1 == 1, &mut scores) {
                Some(c) => probs[c] += w,
                None => abstain += w,
            }
        }
        (probs, abstain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteDistribution {
    /// Candidate labels with their probability of winning a subgraph.
    pub candidates: Vec<(String, f64)>,
    pub abstain: f64,
}

impl VoteDistribution {
    /// Most likely winner, lowest label on ties.
    pub fn mode(&self) -> Option<(&str, f64)> {
        let mut best: Option<(&str, f64)> = None;
        for (l, pr) in &self.candidates {
            if *pr > 0.0 && best.is_none_or(|(_, b)| *pr > b) {
                best = Some((l.as_str(), *pr));
            }
        }
        best
    }
}

fn check_p(p: Probability) -> Result<f64> {
    let v = p.value();
    if v <= 0.0 {
        return Err(invalid("p", "retention must be positive"));
    }
    Ok(v)
}

/// Exact per-subgraph vote distribution by enumerating retained subsets of
/// the query-relevant triples.
pub fn vote_distribution(kg: &ToyKG, q: &Query, p: Probability) -> Result<VoteDistribution> {
    let p = check_p(p)?;
    let ix = Indexed::new(kg, q)?;
    let st = Structure::new(&ix.triples, ix.head, ix.relation);
    if st.slots > EXACT_MAX_SLOTS {
        return Err(Error::Oversize(format!(
            "{} relevant triples (limit {EXACT_MAX_SLOTS})",
            st.slots
        )));
    }
    let (probs, abstain) = st.exact(p);
    Ok(VoteDistribution {
        candidates: st
            .cands
            .iter()
            .zip(probs)
            .map(|(&e, pr)| (ix.entities[e].clone(), pr))
            .collect(),
        abstain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgVote {
    pub prediction: String,
    pub p_a: Probability,
    /// Wilson interval on the winner's vote share.
    pub report: SimReport,
    /// Candidates by vote count, at most `rank_cutoff` entries.
    pub ranking: Vec<(String, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub radius: u32,
    pub vacuous: bool,
}

impl KgVote {
    /// Certificate from the lower Wilson endpoint, or from the point
    /// estimate when `point_estimate` is set.
    pub fn certificate(&self, p: Probability, point_estimate: bool) -> Result<Certificate> {
        let pa = if point_estimate {
            self.p_a
        } else {
            Probability::clamped(self.report.ci_low)
        };
        certified_radius(pa, p)
    }
}

/// Majority vote over `l` random subgraphs, each keeping every triple with
/// probability `p`. Each subgraph votes for its top-scoring tail.
pub fn kg_vote(
    kg: &ToyKG,
    q: &Query,
    l: u64,
    p: Probability,
    rank_cutoff: usize,
    seed: Seed,
) -> Result<KgVote> {
    let pv = check_p(p)?;
    if l == 0 || rank_cutoff == 0 {
        return Err(invalid(
            "l",
            "subgraph count and rank cutoff must be positive",
        ));
    }
    let ix = Indexed::new(kg, q)?;
    let st = Structure::new(&ix.triples, ix.head, ix.relation);
    let mut scratch = vec![0u32; st.cands.len()];
    let full = st
        .top1(|_| true, &mut scratch)
        .ok_or_else(|| Error::NoCandidate {
            head: q.head.clone(),
            relation: q.relation.clone(),
        })?;
    let winners = run_trials(seed, l, |_, rng| {
        let kept: Vec<bool> = (0..st.slots).map(|_| rng.random_bool(pv)).collect();
        let mut scores = vec![0u32; st.cands.len()];
        st.top1(|i| kept[i], &mut scores)
    });
    let mut votes = vec![0u64; st.cands.len()];
    for c in winners.into_iter().flatten() {
        votes[c] += 1;
    }
    let mut order: Vec<usize> = (0..st.cands.len()).collect();
    order.sort_by(|&a, &b| votes[b].cmp(&votes[a]).then(a.cmp(&b)));
    let winner = if votes[order[0]] > 0 { order[0] } else { full };
    let report = SimReport::proportion(votes[winner], l, seed)?;
    Ok(KgVote {
        prediction: ix.entities[st.cands[winner]].clone(),
        p_a: Probability::clamped(votes[winner] as f64 / l as f64),
        report,
        ranking: order
            .iter()
            .filter(|&&c| votes[c] > 0)
            .take(rank_cutoff)
            .map(|&c| (ix.entities[st.cands[c]].clone(), votes[c]))
            .collect(),
    })
}

/// Number of triple edits the vote provably withstands.
pub fn certified_radius(p_a: Probability, p: Probability) -> Result<Certificate> {
    let pv = p.value();
    if pv <= 0.0 || pv >= 1.0 {
        return Err(invalid("p", "retention must lie in (0, 1)"));
    }
    let a = p_a.value();
    if a <= 0.5 {
        return Ok(Certificate {
            radius: 0,
            vacuous: true,
        });
    }
    if a >= 1.0 {
        return Ok(Certificate {
            radius: u32::MAX,
            vacuous: false,
        });
    }
    let r = ((a / (1.0 - a)).ln() / (2.0 * (1.0 - pv).ln().abs())).floor();
    let radius = r.min(u32::MAX as f64) as u32;
    Ok(Certificate {
        radius,
        vacuous: radius == 0,
    })
}

/// Brute-force adversary: true iff no set of at most `delta_test` triple
/// additions or removals (over the declared entities and relations)
/// changes the most likely subgraph winner.
pub fn radius_oracle(kg: &ToyKG, q: &Query, p: Probability, delta_test: usize) -> Result<bool> {
    let pv = check_p(p)?;
    let ix = Indexed::new(kg, q)?;
    if kg.triples.len() + delta_test > ORACLE_MAX_TRIPLES {
        return Err(Error::Oversize(format!(
            "{} triples + {delta_test} edits exceeds {ORACLE_MAX_TRIPLES}",
            kg.triples.len()
        )));
    }
    let mode_of = |triples: &[[usize; 3]]| -> Option<usize> {
        let st = Structure::new(triples, ix.head, ix.relation);
        let (probs, _) = st.exact(pv);
        let mut best: Option<(usize, f64)> = None;
        for (c, &pr) in probs.iter().enumerate() {
            if pr > 0.0 && best.is_none_or(|(_, b)| pr > b) {
                best = Some((c, pr));
            }
        }
        best.map(|(c, _)| st.cands[c])
    };
    let original = mode_of(&ix.triples).ok_or_else(|| Error::NoCandidate {
        head: q.head.clone(),
        relation: q.relation.clone(),
    })?;
    if delta_test == 0 {
        return Ok(true);
    }

    // Edits 0..n are removals of existing triples, the rest additions.
    let existing: BTreeSet<[usize; 3]> = ix.triples.iter().copied().collect();
    let n_ent = ix.entities.len();
    let mut edits: Vec<[usize; 3]> = ix.triples.clone();
    for h in 0..n_ent {
        for r in 0..ix.relations.len() {
            for t in 0..n_ent {
                if h != t && !existing.contains(&[h, r, t]) {
                    edits.push([h, r, t]);
                }
            }
        }
    }
    let n_remove = ix.triples.len();
    let mut sets = Vec::new();
    for size in 1..=delta_test.min(edits.len()) {
        combinations(edits.len(), size, &mut sets);
    }
    let flipped = sets.par_iter().any(|set| {
        let mut triples: Vec<[usize; 3]> = ix
            .triples
            .iter()
            .enumerate()
            .filter(|(i, _)| !set.contains(i))
            .map(|(_, t)| *t)
            .collect();
        triples.extend(set.iter().filter(|&&e| e >= n_remove).map(|&e| edits[e]));
        mode_of(&triples) != Some(original)
    });
    Ok(!flipped)
}

fn combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
