//! Open-addressing hash map from packed sites to small values.
//!
//! Linear probing over a power-of-two table, with backward-shift deletion so
//! there are no tombstones: loop erasure removes as many keys as it inserts
//! and must not degrade over millions of steps. Key `0` marks an empty slot;
//! packed sites are never zero.

const EMPTY: u64 = 0;
const MIN_CAPACITY: usize = 64;

#[inline]
fn hash(key: u64) -> u64 {
    let k = key ^ (key >> 31);
    k.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Clone, Debug)]
pub struct PackedMap<V: Copy + Default> {
    keys: Vec<u64>,
    values: Vec<V>,
    len: usize,
    shift: u32,
}

impl<V: Copy + Default> Default for PackedMap<V> {
    fn default() -> Self {
        Self::with_capacity(0)
    }
}

impl<V: Copy + Default> PackedMap<V> {
    pub fn with_capacity(n: usize) -> Self {
        let cap = (n * 2).next_power_of_two().max(MIN_CAPACITY);
        Self {
            keys: vec![EMPTY; cap],
            values: vec![V::default(); cap],
            len: 0,
            shift: 64 - cap.trailing_zeros(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn mask(&self) -> usize {
        self.keys.len() - 1
    }

    #[inline]
    fn home(&self, key: u64) -> usize {
        (hash(key) >> self.shift) as usize
    }

    /// Slot holding `key`, or the empty slot where it would go.
    #[inline]
    fn probe(&self, key: u64) -> (usize, bool) {
        let mask = self.mask();
        let mut i = self.home(key);
        loop {
            let k = self.keys[i];
            if k == key {
                return (i, true);
            }
            if k == EMPTY {
                return (i, false);
            }
            i = (i + 1) & mask;
        }
    }

    #[inline]
    pub fn get(&self, key: u64) -> Option<V> {
        debug_assert_ne!(key, EMPTY);
        match self.probe(key) {
            (i, true) => Some(self.values[i]),
            _ => None,
        }
    }

    #[inline]
    pub fn contains(&self, key: u64) -> bool {
        self.probe(key).1
    }

    /// Mutable access to the value for `key`, inserting `init` if absent.
    /// The flag is true when the key was already present.
    #[inline]
    pub fn entry(&mut self, key: u64, init: V) -> (&mut V, bool) {
        debug_assert_ne!(key, EMPTY);
        if (self.len + 1) * 8 > self.keys.len() * 7 {
            self.grow();
        }
        let (i, found) = self.probe(key);
        if !found {
            self.keys[i] = key;
            self.values[i] = init;
            self.len += 1;
        }
        (&mut self.values[i], found)
    }

    /// Inserts or overwrites; returns the previous value.
    #[inline]
    pub fn insert(&mut self, key: u64, value: V) -> Option<V> {
        let (slot, found) = self.entry(key, value);
        if found {
            let old = *slot;
            *slot = value;
            Some(old)
        } else {
            None
        }
    }

    pub fn remove(&mut self, key: u64) -> Option<V> {
        let (mut hole, found) = self.probe(key);
        if !found {
            return None;
        }
        let removed = self.values[hole];
        let mask = self.mask();
        let mut i = hole;
        loop {
            i = (i + 1) & mask;
            let k = self.keys[i];
            if k == EMPTY {
                break;
            }
            // Shift back entries whose home does not lie cyclically in (hole, i].
            let home = self.home(k);
            let dist_home = i.wrapping_sub(home) & mask;
            let dist_hole = i.wrapping_sub(hole) & mask;
            if dist_home >= dist_hole {
                self.keys[hole] = k;
                self.values[hole] = self.values[i];
                hole = i;
            }
        }
        self.keys[hole] = EMPTY;
        self.len -= 1;
        Some(removed)
    }

    pub fn clear(&mut self) {
        if self.len > 0 {
            self.keys.fill(EMPTY);
            self.len = 0;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, V)> + '_ {
        self.keys
            .iter()
            .zip(self.values.iter())
            .filter(|(k, _)| **k != EMPTY)
            .map(|(k, v)| (*k, *v))
    }

    fn grow(&mut self) {
        let cap = self.keys.len() * 2;
        let old_keys = std::mem::replace(&mut self.keys, vec![EMPTY; cap]);
        let old_values = std::mem::replace(&mut self.values, vec![V::default(); cap]);
        self.shift -= 1;
        let mask = self.mask();
        for (k, v) in old_keys.into_iter().zip(old_values) {
            if k != EMPTY {
                let mut i = self.home(k);
                while self.keys[i] != EMPTY {
                    i = (i + 1) & mask;
                }
                self.keys[i] = k;
                self.values[i] = v;
            }
        }
    }
}

/// Set of packed sites.
#[derive(Clone, Debug, Default)]
pub struct PackedSet(PackedMap<()>);

impl PackedSet {
    pub fn with_capacity(n: usize) -> Self {
        Self(PackedMap::with_capacity(n))
    }

    /// True if the key was newly inserted.
    #[inline]
    pub fn insert(&mut self, key: u64) -> bool {
        !self.0.entry(key, ()).1
    }

    #[inline]
    pub fn contains(&self, key: u64) -> bool {
        self.0.contains(key)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn clear(&mut self) {
        self.0.clear()
    }
}

impl FromIterator<u64> for PackedSet {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut s = PackedSet::default();
        for k in iter {
            s.insert(k);
        }
        s
    }
}
