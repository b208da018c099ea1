//! Sparse `row → (column, value)` storage for sketched incidence matrices.
//!
//! Linear probing over fixed 32-byte slots. A slot holds up to two entries of
//! one row inline, which covers almost every row since a row is normally hit
//! by a single edge. Further entries of a full row go to an overflow map.

use rustc_hash::FxHashMap;

const EMPTY: u32 = u32::MAX;
const INLINE: usize = 2;

#[derive(Clone, Copy, Debug)]
#[repr(C, align(32))]
struct Slot {
    row: u32,
    cols: [u32; INLINE],
    vals: [f64; INLINE],
}

const VACANT: Slot = Slot {
    row: EMPTY,
    cols: [EMPTY; INLINE],
    vals: [0.0; INLINE],
};

impl Slot {
    fn occupied(&self) -> bool {
        self.row != EMPTY
    }

    fn is_full(&self) -> bool {
        self.cols.iter().all(|&c| c != EMPTY)
    }

    fn is_bare(&self) -> bool {
        self.cols.iter().all(|&c| c == EMPTY)
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct RowTable {
    slots: Vec<Slot>,
    rows: usize,
    nnz: usize,
    /// Entries beyond the inline ones. Only full slots have overflow.
    overflow: FxHashMap<u32, Vec<(u32, f64)>>,
}

/// Large tables are probed at random, so ask for huge pages to cut TLB misses.
fn advise_huge<T>(slots: &[T]) {
    #[cfg(target_os = "linux")]
    {
        const HUGE: usize = 1 << 21;
        let start = slots.as_ptr() as usize;
        let end = start + std::mem::size_of_val(slots);
        let (lo, hi) = ((start + HUGE - 1) & !(HUGE - 1), end & !(HUGE - 1));
        if hi > lo {
            // SAFETY: the range lies inside the live allocation and the
            // advice does not change its contents.
            unsafe { libc::madvise(lo as *mut libc::c_void, hi - lo, libc::MADV_HUGEPAGE) };
        }
    }
}

#[inline]
fn home(row: u32, mask: usize) -> usize {
    ((row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 32) as usize & mask
}

impl RowTable {
    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn is_empty(&self) -> bool {
        self.nnz == 0
    }

    /// Hints the cache about the slot `row` starts probing from.
    #[inline]
    pub fn prefetch(&self, row: u32) {
        if self.slots.is_empty() {
            return;
        }
        #[cfg(target_arch = "x86_64")]
        {
            let p = &self.slots[home(row, self.slots.len() - 1)] as *const Slot as *const i8;
            // SAFETY: prefetching has no architectural effect and `p` points
            // into the live slot array.
            unsafe { std::arch::x86_64::_mm_prefetch(p, std::arch::x86_64::_MM_HINT_T0) };
        }
        #[cfg(not(target_arch = "x86_64"))]
        let _ = row;
    }

    /// Index of `row`'s slot, or of the vacant slot where it would go.
    #[inline]
    fn find(&self, row: u32) -> (usize, bool) {
        let mask = self.slots.len() - 1;
        let mut i = home(row, mask);
        loop {
            let s = &self.slots[i];
            if s.row == row {
                return (i, true);
            }
            if !s.occupied() {
                return (i, false);
            }
            i = (i + 1) & mask;
        }
    }

    fn grow(&mut self) {
        let cap = (self.slots.len() * 2).max(16);
        let mut fresh = Vec::with_capacity(cap);
        advise_huge(fresh.spare_capacity_mut());
        fresh.resize(cap, VACANT);
        let old = std::mem::replace(&mut self.slots, fresh);
        for s in old.into_iter().filter(Slot::occupied) {
            let (i, _) = self.find(s.row);
            self.slots[i] = s;
        }
    }

    /// Adds to two distinct columns of one row. Usually the row is absent or
    /// holds exactly these columns, which takes a single probe.
    #[inline]
    pub fn add_pair(&mut self, row: u32, (a, da): (u32, f64), (b, db): (u32, f64)) {
        if self.slots.is_empty() {
            self.grow();
        }
        let (i, found) = self.find(row);
        let room = (self.rows + 1) * 8 <= self.slots.len() * 5;
        let s = &mut self.slots[i];
        if !found && room && da != 0.0 && db != 0.0 {
            *s = Slot {
                row,
                cols: [a, b],
                vals: [da, db],
            };
            self.rows += 1;
            self.nnz += 2;
            return;
        }
        if found && s.cols[0] == a && s.cols[1] == b {
            let (x, y) = (s.vals[0] + da, s.vals[1] + db);
            if x != 0.0 && y != 0.0 {
                s.vals = [x, y];
                return;
            }
            if x == 0.0 && y == 0.0 && !self.overflow.contains_key(&row) {
                self.nnz -= 2;
                self.remove_slot(i);
                return;
            }
        }
        self.add(row, a, da);
        self.add(row, b, db);
    }

    /// Adds `delta` to entry `(row, col)`, dropping it if it cancels.
    pub fn add(&mut self, row: u32, col: u32, delta: f64) {
        if delta == 0.0 {
            return;
        }
        // Keep the load factor at or below 5/8.
        if (self.rows + 1) * 8 > self.slots.len() * 5 {
            self.grow();
        }
        let (i, found) = self.find(row);
        if !found {
            let s = &mut self.slots[i];
            *s = VACANT;
            s.row = row;
            s.cols[0] = col;
            s.vals[0] = delta;
            self.rows += 1;
            self.nnz += 1;
            return;
        }
        let s = &mut self.slots[i];
        if let Some(k) = s.cols.iter().position(|&c| c == col) {
            s.vals[k] += delta;
            if s.vals[k] == 0.0 {
                s.cols[k] = EMPTY;
                s.vals[k] = 0.0;
                self.nnz -= 1;
                self.refill(i, k);
            }
            return;
        }
        if !s.is_full() {
            let k = s.cols.iter().position(|&c| c == EMPTY).unwrap();
            s.cols[k] = col;
            s.vals[k] = delta;
            self.nnz += 1;
            return;
        }
        let extra = self.overflow.entry(row).or_default();
        match extra.iter().position(|&(c, _)| c == col) {
            Some(k) => {
                extra[k].1 += delta;
                if extra[k].1 == 0.0 {
                    extra.swap_remove(k);
                    self.nnz -= 1;
                    if extra.is_empty() {
                        self.overflow.remove(&row);
                    }
                }
            }
            None => {
                extra.push((col, delta));
                self.nnz += 1;
            }
        }
    }

    /// Fills inline position `k` of slot `i` from the overflow, or releases
    /// the slot when it has no entries left.
    fn refill(&mut self, i: usize, k: usize) {
        let row = self.slots[i].row;
        if let Some(extra) = self.overflow.get_mut(&row) {
            let (c, v) = extra.pop().expect("overflow lists are never empty");
            if extra.is_empty() {
                self.overflow.remove(&row);
            }
            self.slots[i].cols[k] = c;
            self.slots[i].vals[k] = v;
        } else if self.slots[i].is_bare() {
            self.remove_slot(i);
        }
    }

    /// Backward-shift deletion, so probe chains never contain holes.
    fn remove_slot(&mut self, mut i: usize) {
        let mask = self.slots.len() - 1;
        self.slots[i] = VACANT;
        self.rows -= 1;
        let mut j = i;
        loop {
            j = (j + 1) & mask;
            if !self.slots[j].occupied() {
                return;
            }
            let k = home(self.slots[j].row, mask);
            // Move slot j back to i unless its home lies cyclically in (i, j].
            let stays = if i <= j { i < k && k <= j } else { i < k || k <= j };
            if !stays {
                self.slots[i] = self.slots[j];
                self.slots[j] = VACANT;
                i = j;
            }
        }
    }

    /// Every entry as `(row, column, value)`, in no particular order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let inline = self.slots.iter().filter(|s| s.occupied()).flat_map(|s| {
            (0..INLINE).filter(move |&k| s.cols[k] != EMPTY).map(move |k| (s.row, s.cols[k], s.vals[k]))
        });
        let extra = self.overflow.iter().flat_map(|(&r, v)| v.iter().map(move |&(c, x)| (r, c, x)));
        inline.chain(extra)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn sorted(t: &RowTable) -> Vec<(u32, u32, f64)> {
        let mut v: Vec<_> = t.iter().collect();
        v.sort_by_key(|&(r, c, _)| (r, c));
        v
    }

    #[test]
    fn add_cancel_and_overflow() {
        let mut t = RowTable::default();
        for c in 0..5 {
            t.add(7, c, 1.0);
        }
        assert_eq!(t.nnz(), 5);
        t.add(7, 0, -1.0);
        t.add(7, 3, -1.0);
        assert_eq!(sorted(&t), vec![(7, 1, 1.0), (7, 2, 1.0), (7, 4, 1.0)]);
        for c in [1, 2, 4] {
            t.add(7, c, -1.0);
        }
        assert!(t.is_empty());
        assert_eq!(t.rows, 0);
    }

    proptest! {
        #[test]
        fn matches_map(ops in prop::collection::vec((0u32..40, 0u32..4, -2i32..=2), 0..400)) {
            let mut t = RowTable::default();
            let mut m: BTreeMap<(u32, u32), f64> = BTreeMap::new();
            for (r, c, d) in ops {
                // Rows chosen to collide in small tables.
                let row = r * 64;
                t.add(row, c, d as f64);
                let e = m.entry((row, c)).or_insert(0.0);
                *e += d as f64;
                if *e == 0.0 {
                    m.remove(&(row, c));
                }
            }
            let expect: Vec<_> = m.into_iter().map(|((r, c), v)| (r, c, v)).collect();
            prop_assert_eq!(t.nnz(), expect.len());
            prop_assert_eq!(sorted(&t), expect);
        }

        #[test]
        fn pairs_match_singles(ops in prop::collection::vec((0u32..30, 0u32..4, 0u32..4, -2i32..=2), 0..400)) {
            let mut paired = RowTable::default();
            let mut single = RowTable::default();
            for (r, a, b, d) in ops {
                if a == b {
                    continue;
                }
                let row = r * 64;
                paired.add_pair(row, (a, d as f64), (b, -d as f64));
                single.add(row, a, d as f64);
                single.add(row, b, -d as f64);
            }
            prop_assert_eq!(paired.nnz(), single.nnz());
            prop_assert_eq!(paired.rows, single.rows);
            prop_assert_eq!(sorted(&paired), sorted(&single));
        }
    }
}
