//! Pages, segments, the disk time model and the FIFO buffer pool.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::object_model::{ClassId, Oid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PageId(pub u64);

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentId(pub u32);

#[derive(Debug, Error, PartialEq)]
pub enum StorageError {
    #[error("unknown page {0}")]
    UnknownPage(PageId),
    #[error("page {page} has {free} free, object needs {need}")]
    PageFull { page: PageId, need: u64, free: u64 },
    #[error("object {0} is already placed")]
    AlreadyPlaced(Oid),
    #[error("object {0} is not placed")]
    NotPlaced(Oid),
    #[error("object {oid} of size {size} exceeds page capacity {capacity}")]
    ObjectTooLarge { oid: Oid, size: u64, capacity: u64 },
    #[error("unknown segment {0:?}")]
    UnknownSegment(SegmentId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub id: PageId,
    pub capacity: u64,
    pub residents: Vec<(Oid, u64)>,
    pub used: u64,
}

impl Page {
    pub fn new(id: PageId, capacity: u64) -> Self {
        Self { id, capacity, residents: Vec::new(), used: 0 }
    }

    pub fn free(&self) -> u64 {
        self.capacity - self.used
    }

    pub fn fits(&self, size: u64) -> bool {
        self.used + size <= self.capacity
    }

    pub fn contains(&self, oid: Oid) -> bool {
        self.residents.iter().any(|&(o, _)| o == oid)
    }

    pub fn oids(&self) -> impl Iterator<Item = Oid> + '_ {
        self.residents.iter().map(|&(o, _)| o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SegmentOwner {
    Class(ClassId),
    /// A composite hierarchy, named by its root object.
    Hierarchy(Oid),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: SegmentId,
    pub owner: SegmentOwner,
    /// Number of base pages the segment may hold before chaining overflow pages.
    pub base_size: usize,
    pub base_pages: Vec<PageId>,
    pub overflow_pages: Vec<PageId>,
}

impl Segment {
    pub fn pages(&self) -> impl Iterator<Item = PageId> + '_ {
        self.base_pages.iter().chain(&self.overflow_pages).copied()
    }
}

/// Where each object lives. Page ids are never reused within a placement,
/// and a placement built from another starts numbering after it so both
/// can share one buffer pool during a reorganization.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    capacity: u64,
    pages: BTreeMap<PageId, Page>,
    location: HashMap<Oid, PageId>,
    segments: Vec<Segment>,
    page_segment: HashMap<PageId, (SegmentId, usize)>,
    next_page: u64,
}

impl Placement {
    pub fn new(capacity: u64) -> Self {
        Self::with_first_id(capacity, 1)
    }

    pub fn with_first_id(capacity: u64, first: u64) -> Self {
        Self {
            capacity,
            pages: BTreeMap::new(),
            location: HashMap::new(),
            segments: Vec::new(),
            page_segment: HashMap::new(),
            next_page: first,
        }
    }

    /// A fresh, empty placement whose page ids follow this one's.
    pub fn successor(&self) -> Placement {
        Placement::with_first_id(self.capacity, self.next_page)
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn next_page_id(&self) -> PageId {
        PageId(self.next_page)
    }

    pub fn allocate_page(&mut self) -> PageId {
        let id = PageId(self.next_page);
        self.next_page += 1;
        self.pages.insert(id, Page::new(id, self.capacity));
        id
    }

    pub fn page(&self, id: PageId) -> Option<&Page> {
        self.pages.get(&id)
    }

    pub fn contains_page(&self, id: PageId) -> bool {
        self.pages.contains_key(&id)
    }

    pub fn pages(&self) -> impl Iterator<Item = &Page> {
        self.pages.values()
    }

    pub fn page_ids(&self) -> Vec<PageId> {
        self.pages.keys().copied().collect()
    }

    /// Pages holding at least one object.
    pub fn used_pages(&self) -> usize {
        self.pages.values().filter(|p| !p.residents.is_empty()).count()
    }

    pub fn object_count(&self) -> usize {
        self.location.len()
    }

    pub fn page_of(&self, oid: Oid) -> Option<PageId> {
        self.location.get(&oid).copied()
    }

    pub fn place(&mut self, oid: Oid, size: u64, page: PageId) -> Result<(), StorageError> {
        if self.location.contains_key(&oid) {
            return Err(StorageError::AlreadyPlaced(oid));
        }
        if size > self.capacity {
            return Err(StorageError::ObjectTooLarge { oid, size, capacity: self.capacity });
        }
        let p = self.pages.get_mut(&page).ok_or(StorageError::UnknownPage(page))?;
        if !p.fits(size) {
            return Err(StorageError::PageFull { page, need: size, free: p.free() });
        }
        p.residents.push((oid, size));
        p.used += size;
        self.location.insert(oid, page);
        Ok(())
    }

    pub fn remove(&mut self, oid: Oid) -> Result<(PageId, u64), StorageError> {
        let page = self.location.remove(&oid).ok_or(StorageError::NotPlaced(oid))?;
        let p = self.pages.get_mut(&page).expect("location points at a live page");
        let idx = p.residents.iter().position(|&(o, _)| o == oid).expect("resident");
        let (_, size) = p.residents.remove(idx);
        p.used -= size;
        Ok((page, size))
    }

    /// Places `oid` in the last allocated page if it fits, else in a new page.
    pub fn append(&mut self, oid: Oid, size: u64) -> Result<PageId, StorageError> {
        let last = self.pages.keys().next_back().copied();
        let target = match last {
            Some(p) if !self.page_segment.contains_key(&p) && self.pages[&p].fits(size) => p,
            _ => self.allocate_page(),
        };
        self.place(oid, size, target)?;
        Ok(target)
    }

    /// Creates a fixed-size segment; its `base_size` base pages are allocated up front.
    pub fn new_segment(&mut self, owner: SegmentOwner, base_size: usize) -> SegmentId {
        let id = SegmentId(self.segments.len() as u32);
        let base_size = base_size.max(1);
        let base_pages: Vec<PageId> = (0..base_size).map(|_| self.allocate_page()).collect();
        for &p in &base_pages {
            self.page_segment.insert(p, (id, 0));
        }
        self.segments.push(Segment { id, owner, base_size, base_pages, overflow_pages: Vec::new() });
        id
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&Segment> {
        self.segments.get(id.0 as usize)
    }

    pub fn segment_by_owner(&self, owner: SegmentOwner) -> Option<SegmentId> {
        self.segments.iter().find(|s| s.owner == owner).map(|s| s.id)
    }

    pub fn segment_of_page(&self, page: PageId) -> Option<SegmentId> {
        self.page_segment.get(&page).map(|&(s, _)| s)
    }

    /// First-fit placement inside a segment: base pages first, then the
    /// overflow chain, growing it as needed.
    pub fn place_in_segment(&mut self, seg: SegmentId, oid: Oid, size: u64) -> Result<PageId, StorageError> {
        if size > self.capacity {
            return Err(StorageError::ObjectTooLarge { oid, size, capacity: self.capacity });
        }
        let segment = self.segments.get(seg.0 as usize).ok_or(StorageError::UnknownSegment(seg))?;
        let existing = segment.pages().find(|p| self.pages[p].fits(size));
        let page = match existing {
            Some(p) => p,
            None => {
                let id = self.allocate_page();
                let segment = &mut self.segments[seg.0 as usize];
                let depth = if segment.base_pages.len() < segment.base_size {
                    segment.base_pages.push(id);
                    0
                } else {
                    segment.overflow_pages.push(id);
                    segment.overflow_pages.len()
                };
                self.page_segment.insert(id, (seg, depth));
                id
            }
        };
        self.place(oid, size, page)?;
        Ok(page)
    }

    /// 0 for base pages (and pages outside any segment), k for the k-th
    /// overflow page of a segment.
    pub fn overflow_depth(&self, page: PageId) -> usize {
        self.page_segment.get(&page).map(|&(_, d)| d).unwrap_or(0)
    }

    /// Pages read to find the address of `page`: the last base page holds the
    /// pointer to the first overflow page, and each overflow page points at
    /// the next. Empty for base pages.
    pub fn overflow_chain_to(&self, page: PageId) -> Vec<PageId> {
        let Some(&(seg, depth)) = self.page_segment.get(&page) else {
            return Vec::new();
        };
        if depth == 0 {
            return Vec::new();
        }
        let segment = &self.segments[seg.0 as usize];
        let mut path = Vec::with_capacity(depth);
        if let Some(&last_base) = segment.base_pages.last() {
            path.push(last_base);
        }
        path.extend(segment.overflow_pages.iter().take(depth - 1).copied());
        path
    }

    /// Pages read to bring `page` into memory. A segment page needs the whole
    /// segment loaded: its base pages, then the overflow chain up to `page`.
    pub fn load_set(&self, page: PageId) -> Vec<PageId> {
        let Some(&(seg, depth)) = self.page_segment.get(&page) else {
            return vec![page];
        };
        let segment = &self.segments[seg.0 as usize];
        let mut set = segment.base_pages.clone();
        set.extend(segment.overflow_pages.iter().take(depth).copied());
        set
    }

    /// Moves every object of `page` into a brand-new page, keeping `keep`
    /// behind. Returns the new page.
    pub fn split_off(&mut self, page: PageId, keep: &[Oid]) -> Result<PageId, StorageError> {
        let movers: Vec<(Oid, u64)> = self
            .pages
            .get(&page)
            .ok_or(StorageError::UnknownPage(page))?
            .residents
            .iter()
            .copied()
            .filter(|(o, _)| !keep.contains(o))
            .collect();
        let fresh = self.allocate_page();
        for (oid, size) in movers {
            self.remove(oid)?;
            self.place(oid, size, fresh)?;
        }
        Ok(fresh)
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn check(&self) -> Result<(), String> {
        let mut seen = HashMap::new();
        for p in self.pages.values() {
            let used: u64 = p.residents.iter().map(|&(_, s)| s).sum();
            if used != p.used || p.used > p.capacity {
                return Err(format!("page {} used {} of {}", p.id, p.used, p.capacity));
            }
            for &(o, _) in &p.residents {
                if seen.insert(o, p.id).is_some() {
                    return Err(format!("object {o} placed twice"));
                }
                if self.location.get(&o) != Some(&p.id) {
                    return Err(format!("location of {o} out of sync"));
                }
            }
        }
        if seen.len() != self.location.len() {
            return Err("dangling location entries".into());
        }
        Ok(())
    }
}

/// Extra page reads needed to reach `page` through its segment's overflow chain.
pub fn overflow_access_penalty(placement: &Placement, page: PageId) -> usize {
    placement.overflow_depth(page)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskModel {
    pub seek_ms: f64,
    pub latency_ms: f64,
    pub transfer_ms: f64,
}

impl Default for DiskModel {
    fn default() -> Self {
        Self { seek_ms: 28.0, latency_ms: 8.33, transfer_ms: 1.28 }
    }
}

impl DiskModel {
    /// Time of one page transfer at the average seek and latency.
    pub fn access_time(&self) -> f64 {
        self.seek_ms + self.latency_ms + self.transfer_ms
    }
}

pub fn disk_access_time(model: &DiskModel) -> f64 {
    model.access_time()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FetchOutcome {
    pub io_reads: u64,
    pub io_writes: u64,
    pub time_ms: f64,
}

impl FetchOutcome {
    pub fn ios(&self) -> u64 {
        self.io_reads + self.io_writes
    }

    fn from_counts(io_reads: u64, io_writes: u64, disk: &DiskModel) -> Self {
        Self { io_reads, io_writes, time_ms: (io_reads + io_writes) as f64 * disk.access_time() }
    }
}

impl std::ops::AddAssign for FetchOutcome {
    fn add_assign(&mut self, rhs: Self) {
        self.io_reads += rhs.io_reads;
        self.io_writes += rhs.io_writes;
        self.time_ms += rhs.time_ms;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BufferStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub dirty_writes: u64,
    /// Writes issued outside the replacement path (write-through, forced writes).
    pub direct_writes: u64,
}

impl BufferStats {
    pub fn disk_ios(&self) -> u64 {
        self.misses + self.dirty_writes + self.direct_writes
    }
}

/// Page buffer with strict FIFO replacement: the page resident longest is
/// evicted, and written back first if modified.
#[derive(Debug, Clone)]
pub struct BufferPool {
    capacity: usize,
    order: VecDeque<PageId>,
    dirty: HashMap<PageId, bool>,
    stats: BufferStats,
}

impl BufferPool {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, order: VecDeque::with_capacity(capacity), dirty: HashMap::new(), stats: BufferStats::default() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn stats(&self) -> BufferStats {
        self.stats
    }

    pub fn is_resident(&self, page: PageId) -> bool {
        self.dirty.contains_key(&page)
    }

    pub fn is_dirty(&self, page: PageId) -> bool {
        self.dirty.get(&page).copied().unwrap_or(false)
    }

    /// Resident pages, oldest first.
    pub fn resident(&self) -> impl Iterator<Item = PageId> + '_ {
        self.order.iter().copied()
    }

    pub fn fetch(&mut self, page: PageId, placement: &Placement, disk: &DiskModel) -> Result<FetchOutcome, StorageError> {
        if !placement.contains_page(page) {
            return Err(StorageError::UnknownPage(page));
        }
        Ok(self.fetch_page(page, disk))
    }

    /// Fetch without checking the page against a placement.
    pub fn fetch_page(&mut self, page: PageId, disk: &DiskModel) -> FetchOutcome {
        if self.is_resident(page) {
            self.stats.hits += 1;
            return FetchOutcome::default();
        }
        self.stats.misses += 1;
        let writes = self.admit(page, false);
        FetchOutcome::from_counts(1, writes, disk)
    }

    /// Marks a page modified. A page that cannot be held (zero-frame pool)
    /// is written through immediately.
    pub fn mark_dirty(&mut self, page: PageId, disk: &DiskModel) -> FetchOutcome {
        if let Some(d) = self.dirty.get_mut(&page) {
            *d = true;
            FetchOutcome::default()
        } else {
            self.stats.direct_writes += 1;
            FetchOutcome::from_counts(0, 1, disk)
        }
    }

    /// Brings a freshly allocated page into the pool without reading it.
    pub fn install(&mut self, page: PageId, dirty: bool, disk: &DiskModel) -> FetchOutcome {
        if let Some(d) = self.dirty.get_mut(&page) {
            *d |= dirty;
            return FetchOutcome::default();
        }
        if self.capacity == 0 {
            if dirty {
                self.stats.direct_writes += 1;
                return FetchOutcome::from_counts(0, 1, disk);
            }
            return FetchOutcome::default();
        }
        let writes = self.admit(page, dirty);
        FetchOutcome::from_counts(0, writes, disk)
    }

    /// Writes a page straight to disk.
    pub fn write_direct(&mut self, disk: &DiskModel) -> FetchOutcome {
        self.stats.direct_writes += 1;
        FetchOutcome::from_counts(0, 1, disk)
    }

    /// Drops a page without writing it back (its contents were superseded).
    pub fn discard(&mut self, page: PageId) {
        if self.dirty.remove(&page).is_some() {
            self.order.retain(|&p| p != page);
        }
    }

    fn admit(&mut self, page: PageId, dirty: bool) -> u64 {
        if self.capacity == 0 {
            return 0;
        }
        let mut writes = 0;
        if self.order.len() >= self.capacity {
            let victim = self.order.pop_front().expect("pool is full");
            self.stats.evictions += 1;
            if self.dirty.remove(&victim).unwrap_or(false) {
                self.stats.dirty_writes += 1;
                writes += 1;
            }
        }
        self.order.push_back(page);
        self.dirty.insert(page, dirty);
        writes
    }
}
