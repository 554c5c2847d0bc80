//! Transaction mix and resolution of transactions into object accesses.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::generator::VALUE_DOMAIN;
use crate::object_model::{ClassId, Database, EdgeId, Oid, RelKind};

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("transaction probabilities sum to {0}, expected 1")]
    BadMix(f64),
    #[error("transaction probability {0} is negative or not finite")]
    BadProbability(usize),
    #[error("the database is empty")]
    EmptyDb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Cactis,
    Orion,
    Ck,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Cactis, Algorithm::Orion, Algorithm::Ck];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Cactis => "cactis",
            Algorithm::Orion => "orion",
            Algorithm::Ck => "ck",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cactis" => Some(Algorithm::Cactis),
            "orion" => Some(Algorithm::Orion),
            "ck" => Some(Algorithm::Ck),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxKind {
    NameLookup,
    RangeLookup,
    GroupComponents,
    GroupEquivalents,
    GroupDescendants,
    RefComposite,
    RefAncestors,
    SequentialScan,
    ClosureVersion,
    ClosureConfiguration,
    ClosureEquivalence,
    ClosureRandom,
    Editing,
    ObjectCreation,
    Reclustering,
}

impl TxKind {
    /// In mix order: index i is driven by probability PT(i+1).
    pub const ALL: [TxKind; 15] = [
        TxKind::NameLookup,
        TxKind::RangeLookup,
        TxKind::GroupComponents,
        TxKind::GroupEquivalents,
        TxKind::GroupDescendants,
        TxKind::RefComposite,
        TxKind::RefAncestors,
        TxKind::SequentialScan,
        TxKind::ClosureVersion,
        TxKind::ClosureConfiguration,
        TxKind::ClosureEquivalence,
        TxKind::ClosureRandom,
        TxKind::Editing,
        TxKind::ObjectCreation,
        TxKind::Reclustering,
    ];

    pub fn index(self) -> usize {
        TxKind::ALL.iter().position(|&k| k == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            TxKind::NameLookup => "name_lookup",
            TxKind::RangeLookup => "range_lookup",
            TxKind::GroupComponents => "group_components",
            TxKind::GroupEquivalents => "group_equivalents",
            TxKind::GroupDescendants => "group_descendants",
            TxKind::RefComposite => "ref_composite",
            TxKind::RefAncestors => "ref_ancestors",
            TxKind::SequentialScan => "sequential_scan",
            TxKind::ClosureVersion => "closure_version",
            TxKind::ClosureConfiguration => "closure_configuration",
            TxKind::ClosureEquivalence => "closure_equivalence",
            TxKind::ClosureRandom => "closure_random",
            TxKind::Editing => "editing",
            TxKind::ObjectCreation => "object_creation",
            TxKind::Reclustering => "reclustering",
        }
    }

    pub fn is_write(self) -> bool {
        matches!(self, TxKind::Editing | TxKind::ObjectCreation)
    }
}

/// Probabilities of the 15 transaction kinds, PT1..PT15.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionMix {
    pub pt: [f64; 15],
}

impl TransactionMix {
    pub fn default_for(alg: Algorithm) -> Self {
        let mut pt = [0.065; 15];
        let (edit, recluster) = match alg {
            Algorithm::Cactis => (0.1695, 0.0005),
            Algorithm::Orion => (0.169, 0.001),
            Algorithm::Ck => (0.17, 0.0),
        };
        pt[12] = edit;
        pt[13] = 0.05;
        pt[14] = recluster;
        Self { pt }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if let Some(i) = self.pt.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(WorkloadError::BadProbability(i + 1));
        }
        let sum: f64 = self.pt.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WorkloadError::BadMix(sum));
        }
        Ok(())
    }

    /// Share of Editing and ObjectCreation.
    pub fn write_fraction(&self) -> f64 {
        self.pt[12] + self.pt[13]
    }

    /// Rescales the mix so that read transactions (PT1..PT12) make up
    /// `read_pct` percent. The write mass keeps its Editing/ObjectCreation
    /// ratio and reclustering keeps its probability.
    pub fn with_read_percentage(&self, read_pct: f64) -> Self {
        let read: f64 = self.pt[..12].iter().sum();
        let write = self.write_fraction();
        let free = 1.0 - self.pt[14];
        let target_read = (read_pct / 100.0).clamp(0.0, 1.0) * free;
        let target_write = free - target_read;
        let mut pt = self.pt;
        for p in &mut pt[..12] {
            *p = if read > 0.0 { *p * target_read / read } else { target_read / 12.0 };
        }
        let (e, c) = if write > 0.0 { (self.pt[12] / write, self.pt[13] / write) } else { (0.5, 0.5) };
        pt[12] = e * target_write;
        pt[13] = c * target_write;
        Self { pt }
    }

    /// Percentage of read transactions among non-reclustering ones.
    pub fn read_percentage(&self) -> f64 {
        let read: f64 = self.pt[..12].iter().sum();
        100.0 * read / (1.0 - self.pt[14])
    }
}

/// Draws transaction kinds from a validated mix.
#[derive(Debug, Clone)]
pub struct KindSampler {
    index: WeightedIndex<f64>,
}

impl KindSampler {
    pub fn new(mix: &TransactionMix) -> Result<Self, WorkloadError> {
        mix.validate()?;
        let index = WeightedIndex::new(mix.pt).map_err(|_| WorkloadError::BadMix(mix.pt.iter().sum()))?;
        Ok(Self { index })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TxKind {
        TxKind::ALL[self.index.sample(rng)]
    }
}

pub fn sample_transaction<R: Rng + ?Sized>(mix: &TransactionMix, rng: &mut R) -> Result<TxKind, WorkloadError> {
    Ok(KindSampler::new(mix)?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartDistribution {
    Uniform,
    /// Centered on the middle of the OID range, standard deviation N/6.
    Normal,
}

impl StartDistribution {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Some(Self::Uniform),
            "normal" => Some(Self::Normal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Normal => "normal",
        }
    }
}

/// Picks a transaction's starting object. OIDs are dense from 1.
pub fn select_start_object<R: Rng + ?Sized>(db: &Database, dist: StartDistribution, rng: &mut R) -> Result<Oid, WorkloadError> {
    let n = db.len();
    if n == 0 {
        return Err(WorkloadError::EmptyDb);
    }
    let idx = match dist {
        StartDistribution::Uniform => rng.random_range(1..=n),
        StartDistribution::Normal => {
            let law = Normal::new(n as f64 / 2.0, n as f64 / 6.0).expect("finite parameters");
            (law.sample(rng).round() as i64).clamp(1, n as i64) as usize
        }
    };
    Ok(Oid(idx as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessMode {
    Read,
    Write,
    Create,
}

/// One object access with the memory work it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Access {
    pub oid: Oid,
    pub mode: AccessMode,
    /// Words read or written.
    pub words: u64,
    /// Word comparisons performed.
    pub comparisons: u64,
    /// Relationship crossed to reach the object.
    pub via: Option<EdgeId>,
    /// Attribute written, for writes.
    pub attr: Option<usize>,
}

impl Access {
    fn read(oid: Oid, words: u64) -> Self {
        Self { oid, mode: AccessMode::Read, words, comparisons: 0, via: None, attr: None }
    }

    fn via(mut self, edge: Option<EdgeId>) -> Self {
        self.via = edge;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub kind: TxKind,
    pub accesses: Vec<Access>,
}

impl Transaction {
    /// Trace line `seq kind oid_list`, OIDs comma separated.
    pub fn trace_line(&self, seq: u64) -> String {
        let oids: Vec<String> = self.accesses.iter().map(|a| a.oid.to_string()).collect();
        format!("{} {} {}", seq, self.kind.name(), oids.join(","))
    }
}

fn words_of(db: &Database, oid: Oid) -> u64 {
    db.object(oid).map_or(1, |o| o.size_words())
}

/// Neighbours of `oid` along a structural relationship kind.
pub fn neighbours(db: &Database, oid: Oid, kind: RelKind) -> Vec<Oid> {
    let Some(o) = db.object(oid) else { return Vec::new() };
    match kind {
        RelKind::Version => o.version_ancestor.iter().chain(&o.version_descendant).copied().collect(),
        RelKind::Configuration => o.composite_parent.iter().chain(&o.components).copied().collect(),
        RelKind::Equivalence => o.equivalents.clone(),
        RelKind::InheritanceDependency => o.attributes.iter().filter_map(|a| a.reference_target()).collect(),
    }
}

fn populated_classes(db: &Database) -> Vec<ClassId> {
    db.classes().iter().map(|c| c.id).filter(|&c| !db.extent(c).is_empty()).collect()
}

/// Resolves a transaction kind into its object accesses. ObjectCreation and
/// Reclustering resolve to an empty list: the engine performs them.
pub fn resolve<R: Rng + ?Sized>(
    kind: TxKind,
    db: &Database,
    rng: &mut R,
    imd: u32,
    dist: StartDistribution,
) -> Result<Transaction, WorkloadError> {
    let mut acc = Vec::new();
    match kind {
        TxKind::ObjectCreation | TxKind::Reclustering => {}
        TxKind::RangeLookup | TxKind::SequentialScan => {
            let classes = populated_classes(db);
            if classes.is_empty() {
                return Err(WorkloadError::EmptyDb);
            }
            let class = classes[rng.random_range(0..classes.len())];
            let (lo, hi) = {
                let a = rng.random_range(0..VALUE_DOMAIN);
                let b = rng.random_range(0..VALUE_DOMAIN);
                (a.min(b), a.max(b))
            };
            for &oid in db.extent(class) {
                let all = words_of(db, oid);
                if kind == TxKind::SequentialScan {
                    acc.push(Access::read(oid, all));
                } else {
                    let v = db.attribute_value(oid, 0).unwrap_or(0);
                    let hit = (lo..=hi).contains(&v);
                    let mut a = Access::read(oid, if hit { all } else { 1 });
                    a.comparisons = 2;
                    acc.push(a);
                }
            }
        }
        _ => {
            let start = select_start_object(db, dist, rng)?;
            let all = words_of(db, start);
            match kind {
                TxKind::NameLookup => acc.push(Access::read(start, all)),
                TxKind::GroupComponents | TxKind::GroupEquivalents => {
                    let (rel, members) = if kind == TxKind::GroupComponents {
                        (RelKind::Configuration, db.object(start).map(|o| o.components.clone()).unwrap_or_default())
                    } else {
                        (RelKind::Equivalence, db.object(start).map(|o| o.equivalents.clone()).unwrap_or_default())
                    };
                    acc.push(Access::read(start, 1));
                    for m in members {
                        acc.push(Access::read(m, words_of(db, m)).via(db.find_edge(rel, start, m)));
                    }
                }
                TxKind::GroupDescendants | TxKind::RefAncestors => {
                    acc.push(Access::read(start, 1));
                    let mut cur = start;
                    for _ in 0..db.len() {
                        let next = db.object(cur).and_then(|o| {
                            if kind == TxKind::GroupDescendants {
                                o.version_descendant
                            } else {
                                o.version_ancestor
                            }
                        });
                        let Some(n) = next else { break };
                        acc.push(Access::read(n, words_of(db, n)).via(db.find_edge(RelKind::Version, cur, n)));
                        cur = n;
                    }
                }
                TxKind::RefComposite => {
                    acc.push(Access::read(start, 1));
                    if let Some(p) = db.object(start).and_then(|o| o.composite_parent) {
                        acc.push(Access::read(p, words_of(db, p)).via(db.find_edge(RelKind::Configuration, p, start)));
                    }
                }
                TxKind::ClosureVersion
                | TxKind::ClosureConfiguration
                | TxKind::ClosureEquivalence
                | TxKind::ClosureRandom => {
                    acc.push(Access::read(start, all));
                    let depth = rng.random_range(1..=imd.max(1));
                    let mut prev: Option<Oid> = None;
                    let mut cur = start;
                    for _ in 0..depth {
                        let rel = match kind {
                            TxKind::ClosureVersion => RelKind::Version,
                            TxKind::ClosureConfiguration => RelKind::Configuration,
                            TxKind::ClosureEquivalence => RelKind::Equivalence,
                            _ => RelKind::STRUCTURAL[rng.random_range(0..3)],
                        };
                        let options: Vec<Oid> = neighbours(db, cur, rel).into_iter().filter(|&n| Some(n) != prev).collect();
                        if options.is_empty() {
                            break;
                        }
                        let next = options[rng.random_range(0..options.len())];
                        acc.push(Access::read(next, words_of(db, next)).via(db.find_edge(rel, cur, next)));
                        prev = Some(cur);
                        cur = next;
                    }
                }
                TxKind::Editing => {
                    acc.push(Access::read(start, all));
                    let nattr = db.object(start).map_or(0, |o| o.attributes.len());
                    let attr = if nattr > 0 { Some(rng.random_range(0..nattr)) } else { None };
                    acc.push(Access { oid: start, mode: AccessMode::Write, words: 1, comparisons: 0, via: None, attr });
                }
                _ => unreachable!("handled above"),
            }
        }
    }
    Ok(Transaction { kind, accesses: acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::object_model::{ClassDef, ObjectInstance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_mixes_sum_to_one() {
        for alg in Algorithm::ALL {
            TransactionMix::default_for(alg).validate().unwrap();
        }
    }

    #[test]
    fn degenerate_mix() {
        let mut pt = [0.0; 15];
        pt[12] = 1.0;
        let s = KindSampler::new(&TransactionMix { pt }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| s.sample(&mut rng) == TxKind::Editing));
    }

    #[test]
    fn bad_mix_rejected() {
        let mut m = TransactionMix::default_for(Algorithm::Ck);
        m.pt[0] += 0.1;
        assert!(matches!(m.validate(), Err(WorkloadError::BadMix(_))));
    }

    #[test]
    fn read_percentage_shift() {
        let m = TransactionMix::default_for(Algorithm::Cactis).with_read_percentage(60.0);
        m.validate().unwrap();
        assert!((m.read_percentage() - 60.0).abs() < 1e-9);
        assert_eq!(m.pt[14], 0.0005);
        let base = TransactionMix::default_for(Algorithm::Cactis);
        assert!((m.pt[12] / m.pt[13] - base.pt[12] / base.pt[13]).abs() < 1e-9);
    }

    #[test]
    fn empty_db_has_no_start() {
        let db = Database::new(vec![ClassDef::new(ClassId(0), "x")]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_start_object(&db, StartDistribution::Uniform, &mut rng), Err(WorkloadError::EmptyDb));
        assert!(resolve(TxKind::ObjectCreation, &db, &mut rng, 5, StartDistribution::Uniform).unwrap().accesses.is_empty());
    }

    #[test]
    fn single_object_start() {
        let mut db = Database::new(vec![ClassDef::new(ClassId(0), "x")]);
        db.add_object(ObjectInstance::new(Oid(1), ClassId(0), 4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [StartDistribution::Uniform, StartDistribution::Normal] {
            assert_eq!(select_start_object(&db, d, &mut rng).unwrap(), Oid(1));
        }
        let t = resolve(TxKind::NameLookup, &db, &mut rng, 5, StartDistribution::Uniform).unwrap();
        assert_eq!(t.accesses.len(), 1);
        assert_eq!(t.trace_line(7), "7 name_lookup 1");
    }

    #[test]
    fn group_components_reads_each_component() {
        let mut db = Database::new(vec![ClassDef::new(ClassId(0), "x")]);
        db.add_object(ObjectInstance::new(Oid(1), ClassId(0), 4)).unwrap();
        for i in 2..=4 {
            let mut o = ObjectInstance::new(Oid(i), ClassId(0), 4);
            o.composite_parent = Some(Oid(1));
            db.add_object(o).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        loop {
            let t = resolve(TxKind::GroupComponents, &db, &mut rng, 5, StartDistribution::Uniform).unwrap();
            if t.accesses[0].oid == Oid(1) {
                assert_eq!(t.accesses.len(), 4);
                assert!(t.accesses[1..].iter().all(|a| a.via.is_some()));
                break;
            }
        }
    }
}
