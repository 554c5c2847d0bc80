//! Closed-loop discrete-event simulation.
//!
//! Clients think for an exponential time, issue a transaction and wait for
//! it. A single executor serves transactions in FIFO order, so a
//! reorganization holds up everything queued behind it. A client issuing a
//! reclustering does not wait for it; it thinks and issues its next
//! transaction, which then queues behind the reorganization.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::cactis::{self, CactisError, ClusteringCost, MemoryCosts};
use crate::ck::{CkClusterer, CkError, CkParams};
use crate::generator::{self, GenError, Inheritance, InstanceOptions, SchemaParams, VALUE_DOMAIN};
use crate::object_model::{AttrImpl, Database, ModelError, Oid};
use crate::orion;
use crate::storage::{BufferPool, BufferStats, DiskModel, FetchOutcome, PageId, Placement, StorageError};
use crate::workload::{self, AccessMode, Algorithm, KindSampler, StartDistribution, TransactionMix, TxKind, WorkloadError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Cactis(#[from] CactisError),
    #[error(transparent)]
    Ck(#[from] CkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientMode {
    /// One issuing stream; at most IMLVL of its transactions in flight.
    Single,
    /// IMLVL independent clients sharing the executor.
    Multi,
}

impl ClientMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Some(Self::Single),
            "multi" => Some(Self::Multi),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Lock/unlock time per object access, ms.
    pub rcc: f64,
    pub imlvl: u32,
    /// Word size, bytes.
    pub iwdsize: u64,
    /// Processor speed in Mips; folded into the memory operation costs.
    pub icpu: f64,
    pub rmacc: f64,
    pub rmtest: f64,
    pub ipgsize: u64,
    pub disk: DiskModel,
    /// Mean think time, seconds.
    pub ravgthink: f64,
    pub schema: SchemaParams,
    pub inobj: usize,
    pub ibuff: usize,
    pub imd: u32,
    pub isegsize: usize,
    pub ck: CkParams,
    pub mix: TransactionMix,
    /// Seconds during which clients issue transactions.
    pub simtime: f64,
    pub algorithm: Algorithm,
    pub distribution: StartDistribution,
    pub seed: u64,
    pub clients: ClientMode,
}

impl SimParams {
    pub fn defaults(algorithm: Algorithm) -> Self {
        Self {
            rcc: 0.5,
            imlvl: 10,
            iwdsize: 4,
            icpu: 2.0,
            rmacc: 0.0001,
            rmtest: 0.0007,
            ipgsize: 2048,
            disk: DiskModel::default(),
            ravgthink: 4.0,
            schema: SchemaParams::default(),
            inobj: 400,
            ibuff: 10,
            imd: 5,
            isegsize: 5,
            ck: CkParams::default(),
            mix: TransactionMix::default_for(algorithm),
            simtime: 10_800.0,
            algorithm,
            distribution: StartDistribution::Uniform,
            seed: 1,
            clients: ClientMode::Single,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParams(m));
        for (name, v) in [
            ("RCC", self.rcc),
            ("ICPU", self.icpu),
            ("RMACC", self.rmacc),
            ("RMTEST", self.rmtest),
            ("RSEEK", self.disk.seek_ms),
            ("RLATENCY", self.disk.latency_ms),
            ("RTRANSFER", self.disk.transfer_ms),
            ("RAVGTHINK", self.ravgthink),
            ("SIMTIME", self.simtime),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if self.ravgthink <= 0.0 {
            return bad("RAVGTHINK must be positive".into());
        }
        if self.imlvl == 0 {
            return bad("IMLVL must be at least 1".into());
        }
        if self.iwdsize == 0 || self.ipgsize == 0 {
            return bad("IWDSIZE and IPGSIZE must be positive".into());
        }
        if self.imd == 0 {
            return bad("IMD must be at least 1".into());
        }
        if self.isegsize == 0 {
            return bad("ISEGSIZE must be at least 1".into());
        }
        let max_obj = u64::from(2 * self.schema.iavgnattr.max(1) - 1) * u64::from(2 * self.schema.iavgasize.max(1) - 1) * self.iwdsize;
        if max_obj > self.ipgsize {
            return bad(format!("objects of up to {max_obj} bytes do not fit in a {}-byte page", self.ipgsize));
        }
        self.schema.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
        self.ck.validate().map_err(SimError::InvalidParams)?;
        self.mix.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
        Ok(())
    }

    fn mem(&self) -> MemoryCosts {
        MemoryCosts { word_access_ms: self.rmacc, compare_ms: self.rmtest, word_size: self.iwdsize }
    }

    fn client_count(&self) -> usize {
        match self.clients {
            ClientMode::Single => 1,
            ClientMode::Multi => self.imlvl as usize,
        }
    }
}

/// One executed job.
#[derive(Debug, Clone, PartialEq)]
pub struct TxRecord {
    pub kind: TxKind,
    pub issued_ms: f64,
    pub started_ms: f64,
    pub finished_ms: f64,
    /// Disk I/Os charged to the transaction itself.
    pub ios: u64,
    /// Disk I/Os and time charged to clustering work done by this job.
    pub clustering: ClusteringCost,
}

impl TxRecord {
    pub fn response_ms(&self) -> f64 {
        self.finished_ms - self.issued_ms
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    /// Completed transactions, reclusterings excluded.
    pub transactions: u64,
    pub reclusterings: u64,
    /// Absent when no transaction completed.
    pub mean_response_ms: Option<f64>,
    pub transaction_ios: u64,
    pub clustering_time_ms: f64,
    pub clustering_ios: u64,
    /// Peak number of non-empty pages of the live placement.
    pub max_pages: usize,
    /// Peak including old and new pages held together during a reorganization.
    pub max_pages_transient: usize,
    pub throughput: f64,
    pub buffer: BufferStats,
    pub final_objects: usize,
    /// Per transaction kind, in mix order: (count, transaction I/Os, total response ms).
    pub per_kind: Vec<(u64, u64, f64)>,
}

/// Builds the report from the job log.
pub fn summarize(log: &[TxRecord], simtime_s: f64) -> MetricsReport {
    let mut r = MetricsReport { per_kind: vec![(0, 0, 0.0); TxKind::ALL.len()], ..Default::default() };
    let mut total = 0.0;
    for rec in log {
        let k = &mut r.per_kind[rec.kind.index()];
        k.0 += 1;
        k.1 += rec.ios;
        k.2 += rec.response_ms();
        r.clustering_ios += rec.clustering.io();
        r.clustering_time_ms += rec.clustering.time_ms;
        if rec.kind == TxKind::Reclustering {
            r.reclusterings += 1;
            continue;
        }
        r.transactions += 1;
        r.transaction_ios += rec.ios;
        total += rec.response_ms();
    }
    if r.transactions > 0 {
        r.mean_response_ms = Some(total / r.transactions as f64);
    }
    if simtime_s > 0.0 {
        r.throughput = r.transactions as f64 / simtime_s;
    }
    r
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: MetricsReport,
    pub log: Vec<TxRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Issue(usize),
    Done,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    at: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap and the earliest event must come first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

struct Job {
    client: Option<usize>,
    kind: TxKind,
    issued: f64,
}

/// Disk accounting for one job.
#[derive(Default)]
struct Charges {
    time_ms: f64,
    ios: u64,
    clustering: ClusteringCost,
}

impl Charges {
    fn tx(&mut self, out: FetchOutcome) {
        self.time_ms += out.time_ms;
        self.ios += out.ios();
    }

    fn clustering(&mut self, out: FetchOutcome) {
        self.clustering.io_reads += out.io_reads;
        self.clustering.io_writes += out.io_writes;
        self.clustering.time_ms += out.time_ms;
        self.time_ms += out.time_ms;
    }
}

struct State<'p> {
    params: &'p SimParams,
    mem: MemoryCosts,
    db: Database,
    placement: Placement,
    buffer: BufferPool,
    ck: Option<CkClusterer>,
    rng: ChaCha8Rng,
    max_pages: usize,
    max_pages_transient: usize,
}

impl State<'_> {
    fn fetch_tx(&mut self, page: PageId, ch: &mut Charges) {
        for p in self.placement.load_set(page) {
            ch.tx(self.buffer.fetch_page(p, &self.params.disk));
        }
    }

    fn note_pages(&mut self) {
        let used = self.placement.used_pages();
        self.max_pages = self.max_pages.max(used);
        self.max_pages_transient = self.max_pages_transient.max(used);
    }

    /// Reads the pages holding the values of `oid`'s reference slots.
    fn follow_references(&mut self, oid: Oid, ch: &mut Charges) {
        let mut targets: Vec<Oid> = Vec::new();
        if let Some(o) = self.db.object(oid) {
            for slot in &o.attributes {
                let mut cur = slot.reference_target();
                let mut guard = 0;
                while let Some(t) = cur {
                    targets.push(t);
                    guard += 1;
                    if guard > self.db.len() {
                        break;
                    }
                    cur = self
                        .db
                        .object(t)
                        .and_then(|to| to.attributes.iter().find(|a| a.attr_index == slot.attr_index))
                        .and_then(|a| a.reference_target());
                }
            }
        }
        targets.sort();
        targets.dedup();
        for t in targets {
            if let Some(p) = self.placement.page_of(t) {
                ch.time_ms += self.params.rcc;
                self.fetch_tx(p, ch);
            }
        }
    }

    fn execute(&mut self, kind: TxKind) -> Result<Charges, SimError> {
        let mut ch = Charges::default();
        match kind {
            TxKind::Reclustering => self.reorganize(&mut ch)?,
            TxKind::ObjectCreation => self.create(&mut ch)?,
            _ => {
                if self.db.is_empty() {
                    return Ok(ch);
                }
                let tx = workload::resolve(kind, &self.db, &mut self.rng, self.params.imd, self.params.distribution)?;
                for a in &tx.accesses {
                    ch.time_ms += self.params.rcc + a.words as f64 * self.mem.word_access_ms + a.comparisons as f64 * self.mem.compare_ms;
                    let page = self.placement.page_of(a.oid).ok_or(StorageError::NotPlaced(a.oid))?;
                    self.fetch_tx(page, &mut ch);
                    self.db.record_access(a.oid)?;
                    if let Some(e) = a.via {
                        self.db.record_crossing(e)?;
                    }
                    match a.mode {
                        AccessMode::Read => {
                            if a.words > 1 {
                                self.follow_references(a.oid, &mut ch);
                            }
                        }
                        AccessMode::Write => {
                            if let Some(attr) = a.attr {
                                self.write_attribute(a.oid, attr)?;
                            }
                            ch.tx(self.buffer.mark_dirty(page, &self.params.disk));
                        }
                        AccessMode::Create => {}
                    }
                }
            }
        }
        Ok(ch)
    }

    fn write_attribute(&mut self, oid: Oid, attr: usize) -> Result<(), SimError> {
        let value = self.rng.random_range(0..VALUE_DOMAIN);
        let is_ref = self
            .db
            .object(oid)
            .and_then(|o| o.attributes.iter().find(|s| s.attr_index == attr))
            .is_some_and(|s| s.reference_target().is_some());
        if is_ref {
            if let Some(ck) = self.ck.as_mut() {
                ck.note_update(&mut self.db, oid, attr)?;
            }
        } else if let Some(slot) = self.db.object_mut(oid).and_then(|o| o.attributes.iter_mut().find(|s| s.attr_index == attr)) {
            slot.implementation = AttrImpl::Copy(value);
        }
        Ok(())
    }

    fn create(&mut self, ch: &mut Charges) -> Result<(), SimError> {
        let params = self.params;
        let inheritance = match params.algorithm {
            Algorithm::Ck => Inheritance::Ck(&params.ck),
            _ => Inheritance::Copy,
        };
        let opts = InstanceOptions { word_size: params.iwdsize, inheritance };
        let oid = generator::create_instance(&mut self.db, &mut self.rng, &opts)?;
        let (size, words, related) = {
            let o = self.db.object(oid).expect("just created");
            let related: Vec<Oid> =
                o.composite_parent.iter().chain(&o.version_ancestor).chain(&o.equivalents).copied().collect();
            (o.size, o.size_words(), related)
        };

        let page = match params.algorithm {
            Algorithm::Ck => {
                let ck = self.ck.as_mut().expect("CK runs carry a clusterer");
                let placed = ck.place_object(&mut self.db, &mut self.placement, oid)?;
                let disk = &params.disk;
                for &p in &placed.examined {
                    ch.clustering(self.buffer.fetch_page(p, disk));
                }
                let target = placed.page.expect("placement succeeded");
                for &p in &placed.allocated {
                    if p != target {
                        ch.clustering(self.buffer.install(p, true, disk));
                    }
                }
                if placed.split {
                    for &p in &placed.modified {
                        ch.clustering(self.buffer.fetch_page(p, disk));
                        ch.clustering(self.buffer.mark_dirty(p, disk));
                    }
                }
                let t = placed.comparisons as f64 * self.mem.compare_ms;
                ch.clustering.time_ms += t;
                ch.time_ms += t;
                target
            }
            Algorithm::Cactis => self.placement.append(oid, size)?,
            Algorithm::Orion => orion::insert_object(&self.db, &mut self.placement, oid, params.isegsize)?,
        };

        ch.time_ms += params.rcc + words as f64 * self.mem.word_access_ms;
        if self.buffer.is_resident(page) {
            ch.tx(self.buffer.mark_dirty(page, &params.disk));
        } else if self.placement.page(page).is_some_and(|p| p.residents.len() == 1) {
            ch.tx(self.buffer.install(page, true, &params.disk));
        } else {
            self.fetch_tx(page, ch);
            ch.tx(self.buffer.mark_dirty(page, &params.disk));
        }
        self.db.record_access(oid)?;
        for r in related {
            ch.time_ms += params.rcc + self.mem.word_access_ms;
            if let Some(p) = self.placement.page_of(r) {
                self.fetch_tx(p, ch);
                ch.tx(self.buffer.mark_dirty(p, &params.disk));
            }
        }
        self.note_pages();
        Ok(())
    }

    fn reorganize(&mut self, ch: &mut Charges) -> Result<(), SimError> {
        let params = self.params;
        let (new, cost) = match params.algorithm {
            Algorithm::Ck => return Ok(()),
            Algorithm::Cactis => {
                let layout = cactis::recluster(&self.db, params.ipgsize)?;
                let new = layout.to_placement(&self.db, &self.placement)?;
                let cost = cactis::recluster_cost(&self.db, &self.placement, &layout, &mut self.buffer, &params.disk, &self.mem);
                (new, cost)
            }
            Algorithm::Orion => {
                let new = orion::cluster_all(&self.db, params.isegsize, &self.placement)?;
                let cost = orion::cluster_message_cost(&self.db, &self.placement, &new, &mut self.buffer, &params.disk, &self.mem);
                (new, cost)
            }
        };
        self.max_pages_transient = self.max_pages_transient.max(self.placement.used_pages() + new.used_pages());
        for p in self.placement.page_ids() {
            self.buffer.discard(p);
        }
        self.placement = new;
        ch.clustering.io_reads += cost.io_reads;
        ch.clustering.io_writes += cost.io_writes;
        ch.clustering.time_ms += cost.time_ms;
        ch.time_ms += cost.time_ms;
        self.note_pages();
        Ok(())
    }
}

/// Builds the initial database and its placement for `params.algorithm`.
pub fn initial_state(params: &SimParams) -> Result<(Database, Placement, Option<CkClusterer>), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let classes = generator::generate_schema(&params.schema, &mut rng)?;
    let mut placement = Placement::new(params.ipgsize);
    match params.algorithm {
        Algorithm::Ck => {
            let mut ck = CkClusterer::new(params.ck.clone());
            let opts = InstanceOptions { word_size: params.iwdsize, inheritance: Inheritance::Ck(&params.ck) };
            let db = generator::generate_initial_db_with(classes, params.inobj, &mut rng, &opts, |db, oid| {
                ck.place_object(db, &mut placement, oid).map(|_| ()).map_err(|e| match e {
                    CkError::Model(m) => GenError::Model(m),
                    other => GenError::InvalidParams(other.to_string()),
                })
            })?;
            Ok((db, placement, Some(ck)))
        }
        Algorithm::Cactis => {
            let opts = InstanceOptions { word_size: params.iwdsize, inheritance: Inheritance::Copy };
            let db = generator::generate_initial_db_with(classes, params.inobj, &mut rng, &opts, |_, _| Ok(()))?;
            let layout = cactis::recluster(&db, params.ipgsize)?;
            let placement = layout.to_placement(&db, &placement)?;
            Ok((db, placement, None))
        }
        Algorithm::Orion => {
            let opts = InstanceOptions { word_size: params.iwdsize, inheritance: Inheritance::Copy };
            let db = generator::generate_initial_db_with(classes, params.inobj, &mut rng, &opts, |_, _| Ok(()))?;
            let placement = orion::cluster_all(&db, params.isegsize, &placement)?;
            Ok((db, placement, None))
        }
    }
}

pub fn run(params: &SimParams) -> Result<MetricsReport, SimError> {
    Ok(run_with_log(params)?.report)
}

pub fn run_with_log(params: &SimParams) -> Result<SimOutcome, SimError> {
    params.validate()?;
    let (db, placement, ck) = initial_state(params)?;
    // Arrivals (think times, transaction kinds) and access resolution draw
    // from separate streams, so a seed yields the same arrival schedule
    // whatever the database or buffer parameters.
    let mut arrivals = ChaCha8Rng::seed_from_u64(params.seed);
    arrivals.set_stream(1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(2);
    let mut state = State {
        params,
        mem: params.mem(),
        db,
        placement,
        buffer: BufferPool::new(params.ibuff),
        ck,
        rng,
        max_pages: 0,
        max_pages_transient: 0,
    };
    state.note_pages();

    let sampler = KindSampler::new(&params.mix)?;
    let think = Exp::new(1.0 / (params.ravgthink * 1000.0)).expect("positive think time");
    let horizon = params.simtime * 1000.0;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<Scheduled>, at: f64, event: Event| {
        heap.push(Scheduled { at, seq, event });
        seq += 1;
    };
    for c in 0..params.client_count() {
        let at = think.sample(&mut arrivals);
        push(&mut heap, at, Event::Issue(c));
    }

    let mut queue: VecDeque<Job> = VecDeque::new();
    let mut running: Option<(Job, f64, Charges)> = None;
    let mut log = Vec::new();
    let mut now = 0.0f64;
    // A single stream keeps issuing while earlier work is queued, up to IMLVL
    // transactions in flight; independent clients each wait for their own.
    let open_stream = params.clients == ClientMode::Single;
    let mut in_flight = 0usize;
    let mut stalled = false;

    while let Some(Scheduled { at, event, .. }) = heap.pop() {
        debug_assert!(at >= now);
        now = at;
        match event {
            Event::Issue(c) => {
                if now > horizon {
                    continue;
                }
                if open_stream && in_flight >= params.imlvl as usize {
                    stalled = true;
                    continue;
                }
                let kind = sampler.sample(&mut arrivals);
                if kind == TxKind::Reclustering {
                    queue.push_back(Job { client: None, kind, issued: now });
                    let next = now + think.sample(&mut arrivals);
                    push(&mut heap, next, Event::Issue(c));
                } else {
                    in_flight += 1;
                    queue.push_back(Job { client: Some(c), kind, issued: now });
                    if open_stream {
                        let next = now + think.sample(&mut arrivals);
                        push(&mut heap, next, Event::Issue(c));
                    }
                }
            }
            Event::Done => {
                let (job, started, ch) = running.take().expect("a job was running");
                log.push(TxRecord {
                    kind: job.kind,
                    issued_ms: job.issued,
                    started_ms: started,
                    finished_ms: now,
                    ios: ch.ios,
                    clustering: ch.clustering,
                });
                if let Some(c) = job.client {
                    in_flight -= 1;
                    if !open_stream {
                        let next = now + think.sample(&mut arrivals);
                        push(&mut heap, next, Event::Issue(c));
                    } else if stalled {
                        stalled = false;
                        push(&mut heap, now, Event::Issue(c));
                    }
                }
            }
        }
        if running.is_none() {
            if let Some(job) = queue.pop_front() {
                let ch = state.execute(job.kind)?;
                push(&mut heap, now + ch.time_ms, Event::Done);
                running = Some((job, now, ch));
            }
        }
    }

    let mut report = summarize(&log, params.simtime);
    report.max_pages = state.max_pages;
    report.max_pages_transient = state.max_pages_transient;
    report.buffer = state.buffer.stats();
    report.final_objects = state.db.len();
    Ok(SimOutcome { report, log })
}
