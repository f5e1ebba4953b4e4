//! Partitions of finite value domains: the abstraction algebra.
//!
//! A [`Partition`] groups the values of a finite domain into blocks; each
//! block is one abstract value. A block may be flagged as the *zero block*,
//! meaning every member is known to carry the function value 0. Partitions
//! form a lattice under [`refine`] / [`is_finer`], and extend to joint
//! domains through [`combine`] and [`marginalize`].

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Dense variable index into a network's variable list.
pub type VarId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("domain must contain at least one value")]
    EmptyDomain,
    #[error("partitions are over different domain sizes ({0} vs {1})")]
    DomainMismatch(usize, usize),
    #[error("scope mismatch: {0}")]
    ScopeMismatch(String),
}

/// A partition of `{0, .., domain_size-1}` into dense blocks.
///
/// Canonical form: block ids are assigned by ascending smallest member, so
/// structurally equal partitions compare equal. At most one block may be
/// flagged as the zero block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    domain_size: usize,
    block_of: Vec<u32>,
    num_blocks: u32,
    zero_block: Option<u32>,
}

impl Partition {
    /// The identity partition: every value its own block.
    pub fn finest(domain_size: usize) -> Result<Self, PartitionError> {
        if domain_size == 0 {
            return Err(PartitionError::EmptyDomain);
        }
        Ok(Partition {
            domain_size,
            block_of: (0..domain_size as u32).collect(),
            num_blocks: domain_size as u32,
            zero_block: None,
        })
    }

    /// The single-block partition.
    pub fn coarsest(domain_size: usize) -> Result<Self, PartitionError> {
        if domain_size == 0 {
            return Err(PartitionError::EmptyDomain);
        }
        Ok(Partition {
            domain_size,
            block_of: vec![0; domain_size],
            num_blocks: 1,
            zero_block: None,
        })
    }

    /// Builds the canonical partition grouping values with equal keys.
    /// Values for which `is_zero` holds form the zero block regardless of key.
    pub fn from_keys_with_zero<K, F, Z>(
        domain_size: usize,
        mut key: F,
        mut is_zero: Z,
    ) -> Result<Self, PartitionError>
    where
        K: std::hash::Hash + Eq,
        F: FnMut(usize) -> K,
        Z: FnMut(usize) -> bool,
    {
        if domain_size == 0 {
            return Err(PartitionError::EmptyDomain);
        }
        let mut block_of = vec![0u32; domain_size];
        let mut ids: HashMap<Option<K>, u32> = HashMap::new();
        let mut next = 0u32;
        let mut zero_block = None;
        for v in 0..domain_size {
            let k = if is_zero(v) { None } else { Some(key(v)) };
            let zero = k.is_none();
            let id = *ids.entry(k).or_insert_with(|| {
                let id = next;
                next += 1;
                id
            });
            if zero {
                zero_block = Some(id);
            }
            block_of[v] = id;
        }
        Ok(Partition {
            domain_size,
            block_of,
            num_blocks: next,
            zero_block,
        })
    }

    /// Builds the canonical partition grouping values with equal keys.
    pub fn from_keys<K, F>(domain_size: usize, key: F) -> Result<Self, PartitionError>
    where
        K: std::hash::Hash + Eq,
        F: FnMut(usize) -> K,
    {
        Self::from_keys_with_zero(domain_size, key, |_| false)
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks as usize
    }

    /// Number of blocks carrying a (possibly) non-zero value.
    pub fn num_nonzero_blocks(&self) -> usize {
        self.num_blocks as usize - usize::from(self.zero_block.is_some())
    }

    pub fn block_of(&self, value: usize) -> u32 {
        self.block_of[value]
    }

    pub fn zero_block(&self) -> Option<u32> {
        self.zero_block
    }

    pub fn is_zero_value(&self, value: usize) -> bool {
        Some(self.block_of[value]) == self.zero_block
    }

    pub fn is_finest(&self) -> bool {
        self.num_blocks as usize == self.domain_size && self.zero_block.is_none()
    }

    pub fn is_coarsest(&self) -> bool {
        self.num_blocks == 1 && self.zero_block.is_none()
    }

    /// Smallest member of each block, indexed by block id.
    pub fn representatives(&self) -> Vec<usize> {
        let mut reps = vec![usize::MAX; self.num_blocks as usize];
        for (v, &b) in self.block_of.iter().enumerate() {
            if reps[b as usize] == usize::MAX {
                reps[b as usize] = v;
            }
        }
        reps
    }

    /// Members of each block in ascending order, indexed by block id.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_blocks as usize];
        for (v, &b) in self.block_of.iter().enumerate() {
            blocks[b as usize].push(v);
        }
        blocks
    }

    /// Number of members per block, indexed by block id.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_blocks as usize];
        for &b in &self.block_of {
            sizes[b as usize] += 1;
        }
        sizes
    }
}

/// Debug form: blocks in canonical order, zero block suffixed with `*`,
/// e.g. `{0,2,4}|{1,3,5}*`.
impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, members) in self.blocks().iter().enumerate() {
            if id > 0 {
                f.write_str("|")?;
            }
            f.write_str("{")?;
            for (i, v) in members.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{v}")?;
            }
            f.write_str("}")?;
            if Some(id as u32) == self.zero_block {
                f.write_str("*")?;
            }
        }
        Ok(())
    }
}

/// Tight refinement of two partitions over the same domain.
///
/// Non-zero values are grouped by their pair of input blocks; a value that is
/// zero in either input is zero in the result.
pub fn refine(p1: &Partition, p2: &Partition) -> Result<Partition, PartitionError> {
    if p1.domain_size != p2.domain_size {
        return Err(PartitionError::DomainMismatch(
            p1.domain_size,
            p2.domain_size,
        ));
    }
    Partition::from_keys_with_zero(
        p1.domain_size,
        |v| (p1.block_of[v], p2.block_of[v]),
        |v| p1.is_zero_value(v) || p2.is_zero_value(v),
    )
}

/// True iff every `p1` block is contained in some `p2` block.
/// Zero blocks participate as ordinary blocks.
pub fn is_finer(p1: &Partition, p2: &Partition) -> Result<bool, PartitionError> {
    if p1.domain_size != p2.domain_size {
        return Err(PartitionError::DomainMismatch(
            p1.domain_size,
            p2.domain_size,
        ));
    }
    let mut image = vec![u32::MAX; p1.num_blocks as usize];
    for v in 0..p1.domain_size {
        let b1 = p1.block_of[v] as usize;
        let b2 = p2.block_of[v];
        if image[b1] == u32::MAX {
            image[b1] = b2;
        } else if image[b1] != b2 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Groups table entries by value: the coarsest partition safe for the table.
///
/// With `eps == 0` grouping is by exact 64-bit representational equality.
/// With `eps > 0` values are clustered greedily in ascending order, joining a
/// cluster when `|a - b| <= eps * max(|a|, |b|)` holds against the cluster's
/// first member. Entries exactly equal to 0 always form the zero block.
pub fn coarsest_safe_for(values: &[f64], eps: f64) -> Result<Partition, PartitionError> {
    if values.is_empty() {
        return Err(PartitionError::EmptyDomain);
    }
    if eps == 0.0 {
        return Partition::from_keys_with_zero(
            values.len(),
            |v| values[v].to_bits(),
            |v| values[v] == 0.0,
        );
    }
    // Greedy tolerance clustering over the sorted non-zero values.
    let mut order: Vec<usize> = (0..values.len()).filter(|&v| values[v] != 0.0).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut cluster_of = vec![usize::MAX; values.len()];
    let mut anchor = f64::NAN;
    let mut cluster = usize::MAX;
    for &v in &order {
        let x = values[v];
        if cluster == usize::MAX || (x - anchor).abs() > eps * x.abs().max(anchor.abs()) {
            cluster = cluster.wrapping_add(1);
            anchor = x;
        }
        cluster_of[v] = cluster;
    }
    Partition::from_keys_with_zero(values.len(), |v| cluster_of[v], |v| values[v] == 0.0)
}

/// An ordered joint domain: variables sorted ascending by id, indexed in
/// row-major order with the last variable varying fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDomain {
    vars: Vec<(VarId, usize)>,
}

impl JointDomain {
    /// Builds a joint domain; variables are sorted by id and must be unique.
    pub fn new(mut vars: Vec<(VarId, usize)>) -> Result<Self, PartitionError> {
        vars.sort_by_key(|&(v, _)| v);
        for w in vars.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(PartitionError::ScopeMismatch(format!(
                    "duplicate variable {} in scope",
                    w[0].0
                )));
            }
        }
        Ok(JointDomain { vars })
    }

    /// The empty scope (a single joint value).
    pub fn empty() -> Self {
        JointDomain { vars: Vec::new() }
    }

    pub fn vars(&self) -> &[(VarId, usize)] {
        &self.vars
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars.iter().map(|&(v, _)| v)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.vars.binary_search_by_key(&var, |&(v, _)| v).is_ok()
    }

    pub fn is_subscope_of(&self, other: &JointDomain) -> bool {
        self.vars.iter().all(|&(v, s)| {
            other
                .vars
                .binary_search_by_key(&v, |&(w, _)| w)
                .map(|i| other.vars[i].1 == s)
                .unwrap_or(false)
        })
    }

    /// Total number of joint values.
    pub fn size(&self) -> usize {
        self.vars.iter().map(|&(_, s)| s).product()
    }

    /// Stride of each variable in flat indices (last variable fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.vars[i + 1].1;
        }
        strides
    }

    /// Union of two scopes; shared variables must agree on domain size.
    pub fn union(&self, other: &JointDomain) -> Result<JointDomain, PartitionError> {
        let mut vars = self.vars.clone();
        for &(v, s) in &other.vars {
            match vars.binary_search_by_key(&v, |&(w, _)| w) {
                Ok(i) => {
                    if vars[i].1 != s {
                        return Err(PartitionError::ScopeMismatch(format!(
                            "variable {v} has domain size {} in one scope and {s} in the other",
                            vars[i].1
                        )));
                    }
                }
                Err(i) => vars.insert(i, (v, s)),
            }
        }
        Ok(JointDomain { vars })
    }

    /// Variables of `self` not present in `other`.
    pub fn difference(&self, other: &JointDomain) -> JointDomain {
        JointDomain {
            vars: self
                .vars
                .iter()
                .copied()
                .filter(|&(v, _)| !other.contains(v))
                .collect(),
        }
    }

    /// Flat-index strides into `sub` for each variable of `self`
    /// (0 for variables absent from `sub`).
    pub fn projection_strides(&self, sub: &JointDomain) -> Vec<usize> {
        let sub_strides = sub.strides();
        self.vars
            .iter()
            .map(|&(v, _)| {
                sub.vars
                    .binary_search_by_key(&v, |&(w, _)| w)
                    .map(|i| sub_strides[i])
                    .unwrap_or(0)
            })
            .collect()
    }
}

/// Walks a joint domain in flat-index order while maintaining projected flat
/// indices into any number of sub-scopes.
pub struct ScopeWalker {
    sizes: Vec<usize>,
    digits: Vec<usize>,
    proj_strides: Vec<Vec<usize>>,
    proj: Vec<usize>,
    exhausted: bool,
}

impl ScopeWalker {
    pub fn new(scope: &JointDomain, subs: &[&JointDomain]) -> Self {
        let sizes: Vec<usize> = scope.vars().iter().map(|&(_, s)| s).collect();
        let proj_strides: Vec<Vec<usize>> =
            subs.iter().map(|s| scope.projection_strides(s)).collect();
        Self::with_strides(sizes, proj_strides)
    }

    /// Walker over explicit digit sizes with raw per-digit strides for each
    /// projection. Lets callers project into tables whose layout does not
    /// follow the sorted-scope convention (e.g. CPTs in parent-list order).
    pub fn with_strides(sizes: Vec<usize>, proj_strides: Vec<Vec<usize>>) -> Self {
        ScopeWalker {
            digits: vec![0; sizes.len()],
            proj: vec![0; proj_strides.len()],
            sizes,
            proj_strides,
            exhausted: false,
        }
    }

    /// Current projected flat index for sub-scope `k`.
    pub fn proj(&self, k: usize) -> usize {
        self.proj[k]
    }

    pub fn digits(&self) -> &[usize] {
        &self.digits
    }

    /// Advances to the next joint value; false once the domain is exhausted.
    pub fn advance(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        let mut i = self.sizes.len();
        loop {
            if i == 0 {
                self.exhausted = true;
                return false;
            }
            i -= 1;
            self.digits[i] += 1;
            if self.digits[i] < self.sizes[i] {
                for (p, strides) in self.proj.iter_mut().zip(&self.proj_strides) {
                    *p += strides[i];
                }
                return true;
            }
            self.digits[i] = 0;
            for (p, strides) in self.proj.iter_mut().zip(&self.proj_strides) {
                *p -= strides[i] * (self.sizes[i] - 1);
            }
        }
    }
}

/// Combined abstraction over the union of two scopes.
///
/// Two joint values share a block iff their projections share a block in
/// each input; a joint value is zero iff either projection is zero.
pub fn combine(
    px: &Partition,
    sx: &JointDomain,
    py: &Partition,
    sy: &JointDomain,
) -> Result<(JointDomain, Partition), PartitionError> {
    check_scope(px, sx)?;
    check_scope(py, sy)?;
    let scope = sx.union(sy)?;
    let mut keys = Vec::with_capacity(scope.size());
    let mut walker = ScopeWalker::new(&scope, &[sx, sy]);
    loop {
        keys.push((px.block_of(walker.proj(0)), py.block_of(walker.proj(1))));
        if !walker.advance() {
            break;
        }
    }
    let part = Partition::from_keys_with_zero(
        scope.size(),
        |z| keys[z],
        |z| {
            let (bx, by) = keys[z];
            Some(bx) == px.zero_block() || Some(by) == py.zero_block()
        },
    )?;
    Ok((scope, part))
}

/// Marginalized abstraction onto a sub-scope.
///
/// `y` and `y'` share a block iff the partition assigns the same block to
/// `(x, y)` and `(x, y')` for every assignment `x` to the summed-out
/// variables; `y` is zero iff `(x, y)` is zero for all `x`.
pub fn marginalize(
    p: &Partition,
    scope: &JointDomain,
    onto: &JointDomain,
) -> Result<Partition, PartitionError> {
    check_scope(p, scope)?;
    if !onto.is_subscope_of(scope) {
        return Err(PartitionError::ScopeMismatch(
            "marginalization target is not a sub-scope".into(),
        ));
    }
    let onto_size = onto.size().max(1);
    let per_y = scope.size() / onto_size;
    let mut signatures: Vec<Vec<u32>> = vec![Vec::with_capacity(per_y); onto_size];
    let mut walker = ScopeWalker::new(scope, &[onto]);
    let mut idx = 0usize;
    loop {
        signatures[walker.proj(0)].push(p.block_of(idx));
        idx += 1;
        if !walker.advance() {
            break;
        }
    }
    Partition::from_keys_with_zero(
        onto_size,
        |y| signatures[y].clone(),
        |y| match p.zero_block() {
            Some(z) => signatures[y].iter().all(|&b| b == z),
            None => false,
        },
    )
}

fn check_scope(p: &Partition, scope: &JointDomain) -> Result<(), PartitionError> {
    if p.domain_size() != scope.size() {
        return Err(PartitionError::ScopeMismatch(format!(
            "partition over {} values used with a scope of {} joint values",
            p.domain_size(),
            scope.size()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(blocks: &[&[usize]], zero: Option<usize>) -> Partition {
        let n: usize = blocks.iter().map(|b| b.len()).sum();
        let mut block_of = vec![0usize; n];
        for (id, members) in blocks.iter().enumerate() {
            for &v in *members {
                block_of[v] = id;
            }
        }
        Partition::from_keys_with_zero(n, |v| block_of[v], |v| Some(block_of[v]) == zero).unwrap()
    }

    #[test]
    fn finest_is_identity() {
        let p = Partition::finest(3).unwrap();
        assert_eq!(p.num_blocks(), 3);
        assert_eq!(p.to_string(), "{0}|{1}|{2}");
        assert_eq!(Partition::finest(1).unwrap().to_string(), "{0}");
        assert_eq!(Partition::finest(6).unwrap().num_blocks(), 6);
        assert_eq!(Partition::finest(0), Err(PartitionError::EmptyDomain));
    }

    #[test]
    fn coarsest_is_single_block() {
        assert_eq!(Partition::coarsest(6).unwrap().to_string(), "{0,1,2,3,4,5}");
        assert_eq!(Partition::coarsest(1).unwrap().num_blocks(), 1);
        assert_eq!(Partition::coarsest(2).unwrap().to_string(), "{0,1}");
        assert_eq!(Partition::coarsest(0), Err(PartitionError::EmptyDomain));
    }

    #[test]
    fn refine_intersects_blocks() {
        // {1,3,5},{2,4,6} /\ {1,2},{3,4,5,6} -> {1},{2},{3,5},{4,6} in 1-based
        // terms; everything here is 0-based.
        let p1 = part(&[&[0, 2, 4], &[1, 3, 5]], None);
        let p2 = part(&[&[0, 1], &[2, 3, 4, 5]], None);
        let r = refine(&p1, &p2).unwrap();
        assert_eq!(r.to_string(), "{0}|{1}|{2,4}|{3,5}");
    }

    #[test]
    fn refine_lattice_extremes() {
        let p = part(&[&[0, 2], &[1], &[3]], None);
        let finest = Partition::finest(4).unwrap();
        let coarsest = Partition::coarsest(4).unwrap();
        assert_eq!(refine(&p, &finest).unwrap(), finest);
        assert_eq!(refine(&p, &coarsest).unwrap(), p);
    }

    #[test]
    fn refine_zero_absorbs() {
        let p1 = part(&[&[0, 1], &[2, 3]], Some(1));
        let p2 = part(&[&[0], &[1, 2, 3]], Some(0));
        let r = refine(&p1, &p2).unwrap();
        // 0 is zero in p2; 2,3 are zero in p1; they merge into one zero block.
        assert_eq!(r.to_string(), "{0,2,3}*|{1}");
        assert_eq!(r.zero_block(), Some(0));
    }

    #[test]
    fn is_finer_partial_order() {
        let p1 = part(&[&[0, 2, 4], &[1, 3, 5]], None);
        let p2 = part(&[&[0, 1], &[2, 3, 4, 5]], None);
        let r = refine(&p1, &p2).unwrap();
        let finest = Partition::finest(6).unwrap();
        assert!(is_finer(&finest, &p1).unwrap());
        assert!(is_finer(&finest, &p2).unwrap());
        assert!(is_finer(&r, &p1).unwrap());
        assert!(is_finer(&r, &p2).unwrap());
        assert!(!is_finer(&p2, &p1).unwrap());
        assert!(!is_finer(&p1, &p2).unwrap());
    }

    #[test]
    fn combine_groups_by_both_sides() {
        let sx = JointDomain::new(vec![(0, 2)]).unwrap();
        let sy = JointDomain::new(vec![(1, 2)]).unwrap();
        let px = Partition::finest(2).unwrap();
        let py = Partition::coarsest(2).unwrap();
        let (scope, p) = combine(&px, &sx, &py, &sy).unwrap();
        assert_eq!(scope.size(), 4);
        // grouped by X only: {(0,0),(0,1)} and {(1,0),(1,1)}
        assert_eq!(p.to_string(), "{0,1}|{2,3}");

        let (_, p) = combine(&px, &sx, &Partition::finest(2).unwrap(), &sy).unwrap();
        assert!(p.is_finest());
    }

    #[test]
    fn combine_zero_absorbs() {
        let sx = JointDomain::new(vec![(0, 2)]).unwrap();
        let sy = JointDomain::new(vec![(1, 2)]).unwrap();
        let px = part(&[&[0], &[1]], Some(1));
        let py = Partition::coarsest(2).unwrap();
        let (_, p) = combine(&px, &sx, &py, &sy).unwrap();
        // zero block {(1,0),(1,1)} = flat {2,3}
        assert_eq!(p.to_string(), "{0,1}|{2,3}*");
        assert_eq!(p.zero_block(), Some(1));
    }

    #[test]
    fn marginalize_requires_pointwise_equal_columns() {
        // eq/neq over (X, Y): columns over x differ pointwise between y=0 and
        // y=1 (they swap), so nothing merges on Y.
        let scope = JointDomain::new(vec![(0, 2), (1, 2)]).unwrap();
        let onto = JointDomain::new(vec![(1, 2)]).unwrap();
        let eqneq = part(&[&[0, 3], &[1, 2]], None);
        let m = marginalize(&eqneq, &scope, &onto).unwrap();
        assert!(m.is_finest());
    }

    #[test]
    fn marginalize_merges_equal_columns() {
        // Blocks depend only on x: every y sees the same column pattern.
        let scope = JointDomain::new(vec![(0, 2), (1, 2)]).unwrap();
        let onto = JointDomain::new(vec![(1, 2)]).unwrap();
        let by_x = part(&[&[0, 1], &[2, 3]], None);
        let m = marginalize(&by_x, &scope, &onto).unwrap();
        assert!(m.is_coarsest());
    }

    #[test]
    fn marginalize_finest_stays_finest() {
        let scope = JointDomain::new(vec![(0, 3), (1, 2)]).unwrap();
        let onto = JointDomain::new(vec![(1, 2)]).unwrap();
        let m = marginalize(&Partition::finest(6).unwrap(), &scope, &onto).unwrap();
        assert!(m.is_finest());
    }

    #[test]
    fn marginalize_zero_column() {
        // Zero block covers the whole y=1 column of a 2x2 domain.
        let scope = JointDomain::new(vec![(0, 2), (1, 2)]).unwrap();
        let onto = JointDomain::new(vec![(1, 2)]).unwrap();
        let p = part(&[&[0], &[2], &[1, 3]], Some(2));
        let m = marginalize(&p, &scope, &onto).unwrap();
        assert_eq!(m.to_string(), "{0}|{1}*");
        assert!(m.is_zero_value(1));
    }

    #[test]
    fn coarsest_safe_groups_by_value() {
        // Win=yes indicator over a six-sided domain where only parity matters.
        let p = coarsest_safe_for(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0], 0.0).unwrap();
        assert_eq!(p.to_string(), "{0,2,4}|{1,3,5}*");
        assert_eq!(p.zero_block(), Some(1));

        let constant = coarsest_safe_for(&[0.25; 4], 0.0).unwrap();
        assert!(constant.is_coarsest());

        let distinct = coarsest_safe_for(&[0.1, 0.2, 0.3], 0.0).unwrap();
        assert!(distinct.is_finest());
    }

    #[test]
    fn coarsest_safe_with_tolerance() {
        let vals = [0.5, 0.5 + 1e-12, 0.25, 0.0];
        let exact = coarsest_safe_for(&vals, 0.0).unwrap();
        assert_eq!(exact.num_blocks(), 4);
        let approx = coarsest_safe_for(&vals, 1e-9).unwrap();
        assert_eq!(approx.to_string(), "{0,1}|{2}|{3}*");
    }

    #[test]
    fn scope_walker_projects_incrementally() {
        let scope = JointDomain::new(vec![(0, 2), (1, 3), (2, 2)]).unwrap();
        let sub = JointDomain::new(vec![(0, 2), (2, 2)]).unwrap();
        let mut walker = ScopeWalker::new(&scope, &[&sub]);
        let strides = scope.projection_strides(&sub);
        assert_eq!(strides, vec![2, 0, 1]);
        let mut idx = 0;
        loop {
            let digits = walker.digits().to_vec();
            let expect: usize = digits.iter().zip(&strides).map(|(d, s)| d * s).sum();
            assert_eq!(walker.proj(0), expect, "at flat index {idx}");
            idx += 1;
            if !walker.advance() {
                break;
            }
        }
        assert_eq!(idx, 12);
    }

    #[test]
    fn display_zero_block_suffix() {
        let p = part(&[&[0, 2], &[1, 3]], Some(1));
        assert_eq!(p.to_string(), "{0,2}|{1,3}*");
    }
}
