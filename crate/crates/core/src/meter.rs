//! Thread-local operation counters used for workload comparisons.
//!
//! Counters are cheap enough to leave enabled: hot loops add a single batched
//! increment. Each thread sees only its own counts, so parallel queries do
//! not interfere.

use std::cell::Cell;

thread_local! {
    static MUL_ADDS: Cell<u64> = const { Cell::new(0) };
    static CPT_TOUCHES: Cell<u64> = const { Cell::new(0) };
    static PARTITION_OPS: Cell<u64> = const { Cell::new(0) };
}

/// Floating multiply/add operations performed by message passing.
pub fn add_mul_adds(n: u64) {
    MUL_ADDS.with(|c| c.set(c.get() + n));
}

/// CPT entries examined by the network-level abstraction passes.
pub fn add_cpt_touches(n: u64) {
    CPT_TOUCHES.with(|c| c.set(c.get() + n));
}

/// Table cells visited while combining and marginalizing partitions.
pub fn add_partition_ops(n: u64) {
    PARTITION_OPS.with(|c| c.set(c.get() + n));
}

/// Snapshot of this thread's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub mul_adds: u64,
    pub cpt_touches: u64,
    pub partition_ops: u64,
}

pub fn snapshot() -> Snapshot {
    Snapshot {
        mul_adds: MUL_ADDS.with(Cell::get),
        cpt_touches: CPT_TOUCHES.with(Cell::get),
        partition_ops: PARTITION_OPS.with(Cell::get),
    }
}

pub fn reset() {
    MUL_ADDS.with(|c| c.set(0));
    CPT_TOUCHES.with(|c| c.set(0));
    PARTITION_OPS.with(|c| c.set(0));
}

/// Runs `f` with fresh counters and returns its result with the counts it
/// accumulated; the previous counts are restored afterwards.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, Snapshot) {
    let before = snapshot();
    reset();
    let out = f();
    let used = snapshot();
    MUL_ADDS.with(|c| c.set(before.mul_adds + used.mul_adds));
    CPT_TOUCHES.with(|c| c.set(before.cpt_touches + used.cpt_touches));
    PARTITION_OPS.with(|c| c.set(before.partition_ops + used.partition_ops));
    (out, used)
}
