//! Multi-word compare-and-swap (K-CAS) with reusable per-thread descriptors.
//!
//! Every word that may take part in a K-CAS is a [`KcasWord`]. The two low bits
//! of the raw machine word are reserved as a tag:
//!
//! | tag  | meaning                                                     |
//! |------|-------------------------------------------------------------|
//! | `00` | plain value, stored shifted left by two                     |
//! | `01` | reference to a K-CAS descriptor `(owner, sequence)`         |
//! | `10` | reference to a conditional-install (RDCSS) record           |
//!
//! Descriptors are never allocated per operation. Each thread owns one slot
//! per [`KcasDomain`] and recycles it, bumping a sequence number on every
//! reuse. A reference embeds the sequence it was created with, so a helper
//! that copies a descriptor validates the copy by re-reading the sequence
//! afterwards and gives up when it changed.
//!
//! Installation follows the classic two-phase scheme: descriptor references
//! are placed into each word (in address order) through a conditional install
//! that only succeeds while the operation is still undecided, then the status
//! is decided and every word is released to its new (or old) value. Any thread
//! that reads a tagged word helps the in-flight operation before retrying.

use std::cell::Cell;
use std::fmt;
use std::marker::PhantomData;
use std::ptr;
use std::sync::atomic::Ordering::SeqCst;
use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicU64, AtomicUsize};
use std::sync::Mutex;

/// Maximum number of words in one K-CAS.
pub const K_MAX: usize = 8;

/// Maximum number of threads that may be alive at once while using K-CAS.
pub const MAX_THREADS: usize = 1 << OWNER_BITS;

/// Largest value a [`KcasWord`] can hold (62 bits).
pub const MAX_VALUE: u64 = u64::MAX >> TAG_BITS;

const TAG_BITS: u32 = 2;
const TAG_MASK: u64 = 0b11;
const TAG_KCAS: u64 = 0b01;
const TAG_RDCSS: u64 = 0b10;
const OWNER_BITS: u32 = 10;
const OWNER_MASK: u64 = (1 << OWNER_BITS) - 1;
const SEQ_SHIFT: u32 = TAG_BITS + OWNER_BITS;

/// Outcome of a descriptor, packed into the low two bits of its status word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KcasStatus {
    Undecided = 0,
    Succeeded = 1,
    Failed = 2,
}

impl KcasStatus {
    fn from_bits(bits: u64) -> Self {
        match bits & 0b11 {
            0 => KcasStatus::Undecided,
            1 => KcasStatus::Succeeded,
            _ => KcasStatus::Failed,
        }
    }
}

#[inline]
fn pack_status(seq: u64, status: KcasStatus) -> u64 {
    (seq << 2) | status as u64
}

#[inline]
fn seq_of(status_word: u64) -> u64 {
    status_word >> 2
}

#[inline]
fn encode(value: u64) -> u64 {
    debug_assert!(
        value <= MAX_VALUE,
        "value {value:#x} does not fit in 62 bits"
    );
    value << TAG_BITS
}

#[inline]
fn decode(raw: u64) -> u64 {
    raw >> TAG_BITS
}

#[inline]
fn tag(raw: u64) -> u64 {
    raw & TAG_MASK
}

#[inline]
fn make_ref(seq: u64, owner: usize, tag: u64) -> u64 {
    (seq << SEQ_SHIFT) | ((owner as u64) << TAG_BITS) | tag
}

#[inline]
fn ref_owner(raw: u64) -> usize {
    ((raw >> TAG_BITS) & OWNER_MASK) as usize
}

#[inline]
fn ref_seq(raw: u64) -> u64 {
    raw >> SEQ_SHIFT
}

/// A machine word that can take part in a K-CAS.
///
/// Plain values are limited to [`MAX_VALUE`]. The word must be accessed
/// through a [`KcasDomain`] so that in-flight operations are helped.
#[repr(transparent)]
pub struct KcasWord(AtomicU64);

impl KcasWord {
    pub const fn new(value: u64) -> Self {
        assert!(value <= MAX_VALUE);
        KcasWord(AtomicU64::new(value << TAG_BITS))
    }

    /// Raw contents including tag bits.
    pub fn load_raw(&self) -> u64 {
        self.0.load(SeqCst)
    }

    fn addr(&self) -> usize {
        self as *const KcasWord as usize
    }
}

impl Default for KcasWord {
    fn default() -> Self {
        KcasWord::new(0)
    }
}

impl fmt::Debug for KcasWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let raw = self.load_raw();
        match tag(raw) {
            0 => write!(f, "KcasWord({})", decode(raw)),
            TAG_KCAS => write!(
                f,
                "KcasWord(kcas ref owner={} seq={})",
                ref_owner(raw),
                ref_seq(raw)
            ),
            _ => write!(
                f,
                "KcasWord(rdcss ref owner={} seq={})",
                ref_owner(raw),
                ref_seq(raw)
            ),
        }
    }
}

/// Small dense thread indices, recycled when threads exit.
struct IndexPool {
    next: usize,
    free: Vec<usize>,
}

static INDEX_POOL: Mutex<IndexPool> = Mutex::new(IndexPool {
    next: 0,
    free: Vec::new(),
});

struct ThreadIndex(usize);

impl ThreadIndex {
    fn acquire() -> Self {
        let mut pool = INDEX_POOL.lock().unwrap_or_else(|e| e.into_inner());
        let index = match pool.free.pop() {
            Some(index) => index,
            None => {
                let index = pool.next;
                assert!(
                    index < MAX_THREADS,
                    "more than {MAX_THREADS} live threads use K-CAS"
                );
                pool.next += 1;
                index
            }
        };
        ThreadIndex(index)
    }
}

impl Drop for ThreadIndex {
    fn drop(&mut self) {
        let mut pool = INDEX_POOL.lock().unwrap_or_else(|e| e.into_inner());
        pool.free.push(self.0);
    }
}

thread_local! {
    static THREAD_INDEX: ThreadIndex = ThreadIndex::acquire();
}

/// Index of the calling thread in every [`KcasDomain`].
pub fn thread_index() -> usize {
    THREAD_INDEX.with(|t| t.0)
}

/// Per-thread descriptor storage. Written only by its owner, read by helpers.
#[repr(align(64))]
struct Slot {
    /// `sequence << 2 | status`.
    status: AtomicU64,
    len: AtomicUsize,
    addrs: [AtomicUsize; K_MAX],
    expected: [AtomicU64; K_MAX],
    new: [AtomicU64; K_MAX],
    in_use: AtomicBool,
    // conditional-install record
    rd_seq: AtomicU64,
    rd_addr: AtomicUsize,
    rd_expected: AtomicU64,
    rd_kref: AtomicU64,
}

impl Slot {
    fn new() -> Self {
        Slot {
            status: AtomicU64::new(pack_status(0, KcasStatus::Failed)),
            len: AtomicUsize::new(0),
            addrs: Default::default(),
            expected: Default::default(),
            new: Default::default(),
            in_use: AtomicBool::new(false),
            rd_seq: AtomicU64::new(0),
            rd_addr: AtomicUsize::new(0),
            rd_expected: AtomicU64::new(0),
            rd_kref: AtomicU64::new(0),
        }
    }

    /// Copy of the entries for sequence `seq`, or `None` if the slot has been
    /// reused since.
    fn snapshot(&self, seq: u64) -> Option<Entries> {
        if seq_of(self.status.load(SeqCst)) != seq {
            return None;
        }
        let len = self.len.load(SeqCst).min(K_MAX);
        let mut entries = Entries::default();
        for i in 0..len {
            entries.addrs[i] = self.addrs[i].load(SeqCst);
            entries.expected[i] = self.expected[i].load(SeqCst);
            entries.new[i] = self.new[i].load(SeqCst);
        }
        entries.len = len;
        if seq_of(self.status.load(SeqCst)) != seq {
            return None;
        }
        Some(entries)
    }
}

#[derive(Clone, Copy, Default)]
struct Entries {
    len: usize,
    addrs: [usize; K_MAX],
    expected: [u64; K_MAX],
    new: [u64; K_MAX],
}

impl Entries {
    fn iter(&self) -> impl Iterator<Item = (&AtomicU64, u64, u64)> + '_ {
        (0..self.len).map(move |i| {
            // SAFETY: addresses come from `KcasWord`s pushed under the
            // `KcasDescriptor::push` contract, which keeps them alive for as
            // long as the domain is reachable.
            let word = unsafe { &*(self.addrs[i] as *const AtomicU64) };
            (word, self.expected[i], self.new[i])
        })
    }
}

/// A set of per-thread descriptor slots shared by every word of one data
/// structure.
///
/// Helpers only ever dereference locations recorded in this domain's
/// descriptors, so a structure that owns both its words and its domain keeps
/// every such location alive while any thread can reach it.
pub struct KcasDomain {
    slots: Box<[AtomicPtr<Slot>]>,
}

impl Default for KcasDomain {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for KcasDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let used = self
            .slots
            .iter()
            .filter(|s| !s.load(SeqCst).is_null())
            .count();
        f.debug_struct("KcasDomain")
            .field("slots_in_use", &used)
            .finish()
    }
}

impl Drop for KcasDomain {
    fn drop(&mut self) {
        for slot in self.slots.iter() {
            let p = slot.swap(ptr::null_mut(), SeqCst);
            if !p.is_null() {
                // SAFETY: allocated by `Box::into_raw` in `own_slot` and never
                // freed elsewhere; `&mut self` excludes concurrent readers.
                drop(unsafe { Box::from_raw(p) });
            }
        }
    }
}

impl KcasDomain {
    pub fn new() -> Self {
        let slots = (0..MAX_THREADS)
            .map(|_| AtomicPtr::new(ptr::null_mut()))
            .collect();
        KcasDomain { slots }
    }

    fn slot(&self, owner: usize) -> &Slot {
        let p = self.slots[owner].load(SeqCst);
        assert!(!p.is_null(), "descriptor reference to an unallocated slot");
        // SAFETY: non-null slots live until the domain is dropped.
        unsafe { &*p }
    }

    fn own_slot(&self) -> (usize, &Slot) {
        let owner = thread_index();
        let mut p = self.slots[owner].load(SeqCst);
        if p.is_null() {
            // Only the owning thread installs its slot.
            p = Box::into_raw(Box::new(Slot::new()));
            self.slots[owner].store(p, SeqCst);
        }
        // SAFETY: as in `slot`.
        (owner, unsafe { &*p })
    }

    /// Reads the committed value of `word`, helping any operation in flight.
    pub fn read(&self, word: &KcasWord) -> u64 {
        loop {
            let raw = word.0.load(SeqCst);
            match tag(raw) {
                0 => return decode(raw),
                TAG_KCAS => {
                    self.help_kcas(raw);
                }
                _ => self.help_rdcss(raw),
            }
        }
    }

    /// Single-word compare-and-swap that cooperates with in-flight K-CAS
    /// operations. On failure returns the committed value that was observed.
    pub fn compare_exchange(&self, word: &KcasWord, current: u64, new: u64) -> Result<u64, u64> {
        let (current_raw, new_raw) = (encode(current), encode(new));
        loop {
            match word
                .0
                .compare_exchange(current_raw, new_raw, SeqCst, SeqCst)
            {
                Ok(_) => return Ok(current),
                Err(raw) => match tag(raw) {
                    0 => return Err(decode(raw)),
                    TAG_KCAS => {
                        self.help_kcas(raw);
                    }
                    _ => self.help_rdcss(raw),
                },
            }
        }
    }

    /// Unconditionally replaces the committed value of `word`.
    pub fn store(&self, word: &KcasWord, value: u64) {
        let mut current = self.read(word);
        while let Err(observed) = self.compare_exchange(word, current, value) {
            current = observed;
        }
    }

    /// Acquires the calling thread's descriptor, bumping its sequence number.
    ///
    /// # Panics
    ///
    /// If the calling thread already holds a descriptor from this domain.
    pub fn descriptor(&self) -> KcasDescriptor<'_> {
        let (owner, slot) = self.own_slot();
        assert!(
            !slot.in_use.swap(true, SeqCst),
            "thread {owner} already holds a K-CAS descriptor"
        );
        let seq = seq_of(slot.status.load(SeqCst)) + 1;
        slot.status
            .store(pack_status(seq, KcasStatus::Undecided), SeqCst);
        KcasDescriptor {
            domain: self,
            slot,
            owner,
            seq,
            entries: Entries::default(),
            _not_send: PhantomData,
        }
    }

    /// Helps the operation referenced by `kref`. Returns `None` when the
    /// reference is stale (the descriptor has since been reused), otherwise
    /// whether the operation succeeded.
    fn help_kcas(&self, kref: u64) -> Option<bool> {
        let seq = ref_seq(kref);
        let slot = self.slot(ref_owner(kref));
        let entries = slot.snapshot(seq)?;
        self.run(slot, kref, &entries)
    }

    fn run(&self, slot: &Slot, kref: u64, entries: &Entries) -> Option<bool> {
        let seq = ref_seq(kref);
        let status = slot.status.load(SeqCst);
        if seq_of(status) != seq {
            return None;
        }
        if KcasStatus::from_bits(status) == KcasStatus::Undecided {
            let mut outcome = KcasStatus::Succeeded;
            'entries: for (word, expected, _) in entries.iter() {
                loop {
                    let seen = self.rdcss(word, expected, kref);
                    if seen == kref || seen == expected {
                        break;
                    }
                    if tag(seen) == TAG_KCAS {
                        self.help_kcas(seen);
                        continue;
                    }
                    outcome = KcasStatus::Failed;
                    break 'entries;
                }
            }
            let _ = slot.status.compare_exchange(
                pack_status(seq, KcasStatus::Undecided),
                pack_status(seq, outcome),
                SeqCst,
                SeqCst,
            );
        }
        let status = slot.status.load(SeqCst);
        if seq_of(status) != seq {
            return None;
        }
        let succeeded = KcasStatus::from_bits(status) == KcasStatus::Succeeded;
        for (word, expected, new) in entries.iter() {
            let release = if succeeded { new } else { expected };
            loop {
                let raw = word.load(SeqCst);
                if raw == kref {
                    if word.compare_exchange(kref, release, SeqCst, SeqCst).is_ok() {
                        break;
                    }
                } else if tag(raw) == TAG_RDCSS {
                    // A conditional install that read our status before it
                    // was decided may still be pending here; resolve it so
                    // it cannot resurrect `kref` after we return.
                    self.help_rdcss(raw);
                } else {
                    break;
                }
            }
        }
        Some(succeeded)
    }

    /// Installs `kref` into `word` if it holds `expected` and the referenced
    /// operation is still undecided. Returns the raw value observed.
    fn rdcss(&self, word: &AtomicU64, expected: u64, kref: u64) -> u64 {
        let (owner, slot) = self.own_slot();
        let seq = slot.rd_seq.load(SeqCst) + 1;
        slot.rd_seq.store(seq, SeqCst);
        slot.rd_addr
            .store(word as *const AtomicU64 as usize, SeqCst);
        slot.rd_expected.store(expected, SeqCst);
        slot.rd_kref.store(kref, SeqCst);
        let rref = make_ref(seq, owner, TAG_RDCSS);
        loop {
            match word.compare_exchange(expected, rref, SeqCst, SeqCst) {
                Ok(_) => {
                    self.complete_rdcss(word, rref, expected, kref);
                    return expected;
                }
                Err(raw) if tag(raw) == TAG_RDCSS => self.help_rdcss(raw),
                Err(raw) => return raw,
            }
        }
    }

    fn complete_rdcss(&self, word: &AtomicU64, rref: u64, expected: u64, kref: u64) {
        let status = self.slot(ref_owner(kref)).status.load(SeqCst);
        let undecided = seq_of(status) == ref_seq(kref)
            && KcasStatus::from_bits(status) == KcasStatus::Undecided;
        let value = if undecided { kref } else { expected };
        let _ = word.compare_exchange(rref, value, SeqCst, SeqCst);
    }

    fn help_rdcss(&self, rref: u64) {
        let seq = ref_seq(rref);
        let slot = self.slot(ref_owner(rref));
        if slot.rd_seq.load(SeqCst) != seq {
            return;
        }
        let addr = slot.rd_addr.load(SeqCst);
        let expected = slot.rd_expected.load(SeqCst);
        let kref = slot.rd_kref.load(SeqCst);
        if slot.rd_seq.load(SeqCst) != seq {
            return;
        }
        // SAFETY: see `Entries::iter`.
        let word = unsafe { &*(addr as *const AtomicU64) };
        self.complete_rdcss(word, rref, expected, kref);
    }
}

/// The calling thread's reusable descriptor, obtained from
/// [`KcasDomain::descriptor`].
pub struct KcasDescriptor<'d> {
    domain: &'d KcasDomain,
    slot: &'d Slot,
    owner: usize,
    seq: u64,
    entries: Entries,
    _not_send: PhantomData<Cell<()>>,
}

impl fmt::Debug for KcasDescriptor<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KcasDescriptor")
            .field("owner", &self.owner)
            .field("sequence", &self.seq)
            .field("len", &self.entries.len)
            .finish()
    }
}

impl<'d> KcasDescriptor<'d> {
    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn sequence(&self) -> u64 {
        self.seq
    }

    pub fn len(&self) -> usize {
        self.entries.len
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len == 0
    }

    /// Adds `(word, expected, new)` to the operation.
    ///
    /// # Safety
    ///
    /// `word` must stay alive for as long as any thread may access the
    /// domain: other threads can help this operation after it has returned,
    /// up to the point where they notice the descriptor was reused. Words
    /// owned by the same structure as the domain satisfy this.
    ///
    /// # Panics
    ///
    /// If more than [`K_MAX`] entries are pushed, or `expected`/`new` exceed
    /// [`MAX_VALUE`].
    pub unsafe fn push(&mut self, word: &KcasWord, expected: u64, new: u64) -> &mut Self {
        let i = self.entries.len;
        assert!(i < K_MAX, "K-CAS supports at most {K_MAX} words");
        assert!(
            expected <= MAX_VALUE && new <= MAX_VALUE,
            "K-CAS values are limited to 62 bits"
        );
        self.entries.addrs[i] = word.addr();
        self.entries.expected[i] = encode(expected);
        self.entries.new[i] = encode(new);
        self.entries.len += 1;
        self
    }

    /// Sorts the entries by address and publishes them into the slot.
    fn publish(&mut self) -> u64 {
        let e = &mut self.entries;
        let mut order: Vec<usize> = (0..e.len).collect();
        order.sort_unstable_by_key(|&i| e.addrs[i]);
        let sorted = Entries {
            len: e.len,
            addrs: std::array::from_fn(|j| order.get(j).map_or(0, |&i| e.addrs[i])),
            expected: std::array::from_fn(|j| order.get(j).map_or(0, |&i| e.expected[i])),
            new: std::array::from_fn(|j| order.get(j).map_or(0, |&i| e.new[i])),
        };
        assert!(
            sorted.addrs[..sorted.len].windows(2).all(|w| w[0] != w[1]),
            "K-CAS entries must name distinct words"
        );
        *e = sorted;
        for i in 0..e.len {
            self.slot.addrs[i].store(e.addrs[i], SeqCst);
            self.slot.expected[i].store(e.expected[i], SeqCst);
            self.slot.new[i].store(e.new[i], SeqCst);
        }
        self.slot.len.store(e.len, SeqCst);
        make_ref(self.seq, self.owner, TAG_KCAS)
    }

    /// Executes the operation. Returns `true` iff every word held its
    /// expected value and all were replaced atomically.
    pub fn execute(mut self) -> bool {
        assert!(!self.is_empty(), "empty K-CAS");
        let kref = self.publish();
        self.domain
            .run(self.slot, kref, &self.entries)
            .expect("owner's descriptor cannot be reused while it runs")
    }
}

impl Drop for KcasDescriptor<'_> {
    fn drop(&mut self) {
        self.slot.in_use.store(false, SeqCst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicBool;
    use std::sync::{Arc, Barrier};
    use std::thread;
    use std::time::Duration;

    struct Words {
        domain: KcasDomain,
        words: Vec<KcasWord>,
    }

    impl Words {
        fn new(values: &[u64]) -> Self {
            Words {
                domain: KcasDomain::new(),
                words: values.iter().map(|&v| KcasWord::new(v)).collect(),
            }
        }

        fn kcas(&self, ops: &[(usize, u64, u64)]) -> bool {
            let mut d = self.domain.descriptor();
            for &(w, e, n) in ops {
                unsafe { d.push(&self.words[w], e, n) };
            }
            d.execute()
        }

        fn values(&self) -> Vec<u64> {
            self.words.iter().map(|w| self.domain.read(w)).collect()
        }
    }

    #[test]
    fn plain_read() {
        let w = Words::new(&[7]);
        assert_eq!(w.domain.read(&w.words[0]), 7);
    }

    #[test]
    fn single_word_behaves_like_cas() {
        let w = Words::new(&[1]);
        assert!(w.kcas(&[(0, 1, 2)]));
        assert!(!w.kcas(&[(0, 1, 3)]));
        assert_eq!(w.values(), vec![2]);
    }

    #[test]
    fn mismatch_leaves_every_word_unchanged() {
        let w = Words::new(&[1, 2, 3]);
        assert!(!w.kcas(&[(0, 1, 10), (1, 99, 20), (2, 3, 30)]));
        assert_eq!(w.values(), vec![1, 2, 3]);
        for word in &w.words {
            assert_eq!(tag(word.load_raw()), 0);
        }
        assert!(w.kcas(&[(2, 3, 30), (0, 1, 10), (1, 2, 20)]));
        assert_eq!(w.values(), vec![10, 20, 30]);
    }

    #[test]
    fn sequence_increases_and_carries_owner() {
        let domain = KcasDomain::new();
        let first = domain.descriptor();
        let (s1, owner) = (first.sequence(), first.owner());
        drop(first);
        let second = domain.descriptor();
        assert!(second.sequence() > s1);
        assert_eq!(owner, thread_index());
        assert_eq!(second.owner(), thread_index());
    }

    #[test]
    #[should_panic(expected = "already holds")]
    fn nested_acquire_panics() {
        let domain = KcasDomain::new();
        let _a = domain.descriptor();
        let _b = domain.descriptor();
    }

    #[test]
    fn reference_encoding_round_trips() {
        let r = make_ref(123_456_789, 77, TAG_KCAS);
        assert_eq!(tag(r), TAG_KCAS);
        assert_eq!(ref_owner(r), 77);
        assert_eq!(ref_seq(r), 123_456_789);
    }

    #[test]
    fn read_helps_decided_operation() {
        let w = Words::new(&[5, 6]);
        let mut d = w.domain.descriptor();
        unsafe {
            d.push(&w.words[0], 5, 9);
            d.push(&w.words[1], 6, 10);
        }
        let kref = d.publish();
        // Owner installed both references and decided, then stalled.
        for word in &w.words {
            word.0.store(kref, SeqCst);
        }
        d.slot
            .status
            .store(pack_status(d.seq, KcasStatus::Succeeded), SeqCst);
        assert_eq!(w.domain.read(&w.words[0]), 9);
        assert_eq!(w.domain.read(&w.words[1]), 10);
        drop(d);
    }

    #[test]
    fn read_helps_undecided_operation_to_completion() {
        let w = Words::new(&[5, 6, 7]);
        let mut d = w.domain.descriptor();
        unsafe {
            d.push(&w.words[0], 5, 50);
            d.push(&w.words[1], 6, 60);
            d.push(&w.words[2], 7, 70);
        }
        let kref = d.publish();
        // Stalled after installing only the first entry.
        let first = d.entries.addrs[0];
        let first = w.words.iter().find(|x| x.addr() == first).unwrap();
        first.0.store(kref, SeqCst);
        assert_eq!(w.values(), vec![50, 60, 70]);
        drop(d);
    }

    #[test]
    fn stale_reference_is_abandoned() {
        let w = Words::new(&[5]);
        let mut d = w.domain.descriptor();
        unsafe { d.push(&w.words[0], 5, 9) };
        let kref = d.publish();
        drop(d);
        let bumped = w.domain.descriptor();
        assert!(w.domain.help_kcas(kref).is_none());
        // the word was never touched
        assert_eq!(w.domain.read(&w.words[0]), 5);
        drop(bumped);
    }

    #[test]
    fn read_retries_past_stale_reference() {
        let w = Arc::new(Words::new(&[5]));
        let mut d = w.domain.descriptor();
        unsafe { d.push(&w.words[0], 5, 9) };
        let kref = d.publish();
        drop(d);
        drop(w.domain.descriptor());
        w.words[0].0.store(kref, SeqCst);
        let reader = {
            let w = Arc::clone(&w);
            thread::spawn(move || w.domain.read(&w.words[0]))
        };
        thread::sleep(Duration::from_millis(20));
        w.words[0].0.store(encode(11), SeqCst);
        assert_eq!(reader.join().unwrap(), 11);
    }

    #[test]
    fn others_progress_past_stalled_owner() {
        let w = Arc::new(Words::new(&[0, 0]));
        let mut d = w.domain.descriptor();
        unsafe {
            d.push(&w.words[0], 0, 1);
            d.push(&w.words[1], 0, 1);
        }
        let kref = d.publish();
        let first = d.entries.addrs[0];
        w.words
            .iter()
            .find(|x| x.addr() == first)
            .unwrap()
            .0
            .store(kref, SeqCst);
        // `d` is never executed: its owner is stalled mid-install.
        let workers: Vec<_> = (0..3)
            .map(|_| {
                let w = Arc::clone(&w);
                thread::spawn(move || {
                    for _ in 0..1000 {
                        loop {
                            let a = w.domain.read(&w.words[0]);
                            let b = w.domain.read(&w.words[1]);
                            if w.kcas(&[(0, a, a + 1), (1, b, b + 1)]) {
                                break;
                            }
                        }
                    }
                })
            })
            .collect();
        for h in workers {
            h.join().unwrap();
        }
        // stalled op was helped (+1) and 3000 increments followed it
        assert_eq!(w.values(), vec![3001, 3001]);
        drop(d);
    }

    #[test]
    fn compare_exchange_helps_and_reports_value() {
        let w = Words::new(&[4]);
        assert_eq!(w.domain.compare_exchange(&w.words[0], 3, 8), Err(4));
        assert_eq!(w.domain.compare_exchange(&w.words[0], 4, 8), Ok(4));
        w.domain.store(&w.words[0], MAX_VALUE);
        assert_eq!(w.domain.read(&w.words[0]), MAX_VALUE);
    }

    #[test]
    fn equal_pair_stress() {
        const WRITERS: usize = 4;
        const PER: u64 = 20_000;
        let w = Arc::new(Words::new(&[0, 0]));
        let stop = Arc::new(AtomicBool::new(false));
        let barrier = Arc::new(Barrier::new(WRITERS + 2));
        let mut handles = Vec::new();
        for _ in 0..WRITERS {
            let (w, barrier) = (Arc::clone(&w), Arc::clone(&barrier));
            handles.push(thread::spawn(move || {
                barrier.wait();
                for _ in 0..PER {
                    loop {
                        let a = w.domain.read(&w.words[0]);
                        if w.kcas(&[(0, a, a + 1), (1, a, a + 1)]) {
                            break;
                        }
                    }
                }
            }));
        }
        let reader = {
            let (w, stop, barrier) = (Arc::clone(&w), Arc::clone(&stop), Arc::clone(&barrier));
            thread::spawn(move || {
                barrier.wait();
                let mut violations = 0u64;
                while !stop.load(SeqCst) {
                    // a1 == a2 means no increment committed in between,
                    // so b must equal both
                    let a1 = w.domain.read(&w.words[0]);
                    let b = w.domain.read(&w.words[1]);
                    let a2 = w.domain.read(&w.words[0]);
                    if !(a1 <= b && b <= a2) {
                        violations += 1;
                    }
                }
                violations
            })
        };
        barrier.wait();
        for h in handles {
            h.join().unwrap();
        }
        stop.store(true, SeqCst);
        assert_eq!(reader.join().unwrap(), 0);
        assert_eq!(w.values(), vec![WRITERS as u64 * PER; 2]);
    }
}
