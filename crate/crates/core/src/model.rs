//! Core domain types: slots, parties, hashes, blocks and chains, plus the
//! pure chain functions (validity, pruning, prefix, chain-from-block, position).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discrete round index. Slot 0 belongs to the genesis block.
pub type Slot = u64;

/// Identifier of a participant. Id 0 is reserved for the genesis baker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub u32);

impl PartyId {
    pub const GENESIS: PartyId = PartyId(0);
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Output of [`BlockHasher::hash_block`], truncated to the configured width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hash(pub u64);

impl fmt::Display for Hash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Opaque transaction payload. Cloning is cheap.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Payload(Arc<[u8]>);

impl Payload {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Payload(Arc::from(bytes.into()))
    }

    pub fn empty() -> Self {
        Payload::default()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Serialize for Payload {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Payload {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map(Payload::new).map_err(|e| serde::de::Error::custom(format!("payload must be hex: {e}")))
    }
}

/// The on-wire unit. Field-wise equality; derived ordering is used as the
/// final tie-break among equal-hash blocks.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Block {
    pub pred: Hash,
    pub slot: Slot,
    pub txs: Payload,
    pub bid: PartyId,
}

impl Block {
    pub fn new(pred: Hash, slot: Slot, txs: Payload, bid: PartyId) -> Self {
        Block { pred, slot, txs, bid }
    }

    /// Slot 0, zero predecessor, empty payload, genesis baker.
    pub fn genesis() -> Self {
        Block { pred: Hash(0), slot: 0, txs: Payload::empty(), bid: PartyId::GENESIS }
    }

    pub fn is_genesis(&self) -> bool {
        *self == Block::genesis()
    }

    /// Fixed-order little-endian encoding used for hashing:
    /// `pred: u64 | slot: u64 | txs_len: u64 | txs | bid: u32`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + self.txs.len());
        out.extend_from_slice(&self.pred.0.to_le_bytes());
        out.extend_from_slice(&self.slot.to_le_bytes());
        out.extend_from_slice(&(self.txs.len() as u64).to_le_bytes());
        out.extend_from_slice(self.txs.as_bytes());
        out.extend_from_slice(&self.bid.0.to_le_bytes());
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HashWidthError {
    #[error("hash width must be between 1 and 64 bits, got {0}")]
    OutOfRange(u8),
}

/// Public non-cryptographic block hash: FNV-1a over [`Block::encode`],
/// finished with the splitmix64 avalanche and truncated to `width` bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHasher {
    width: u8,
}

impl Default for BlockHasher {
    fn default() -> Self {
        BlockHasher { width: 64 }
    }
}

impl BlockHasher {
    pub fn new(width: u8) -> Result<Self, HashWidthError> {
        if width == 0 || width > 64 {
            return Err(HashWidthError::OutOfRange(width));
        }
        Ok(BlockHasher { width })
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn hash_bytes(&self, bytes: &[u8]) -> Hash {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let h = splitmix64(h);
        let mask = if self.width == 64 { u64::MAX } else { (1u64 << self.width) - 1 };
        Hash(h & mask)
    }

    pub fn hash_block(&self, b: &Block) -> Hash {
        self.hash_bytes(&b.encode())
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The lottery as seen by chain validation.
pub trait WinnerPredicate {
    fn is_winner(&self, party: PartyId, slot: Slot) -> bool;
}

impl<F> WinnerPredicate for F
where
    F: Fn(PartyId, Slot) -> bool,
{
    fn is_winner(&self, party: PartyId, slot: Slot) -> bool {
        self(party, slot)
    }
}

/// Hashing and lottery rules shared by everything that validates chains.
#[derive(Clone)]
pub struct ChainRules {
    pub hasher: BlockHasher,
    pub winner: Arc<dyn WinnerPredicate + Send + Sync>,
}

impl ChainRules {
    pub fn new(hasher: BlockHasher, winner: Arc<dyn WinnerPredicate + Send + Sync>) -> Self {
        ChainRules { hasher, winner }
    }

    pub fn hash(&self, b: &Block) -> Hash {
        self.hasher.hash_block(b)
    }

    /// Genesis is valid by definition; every other block needs a lottery win.
    pub fn block_valid(&self, b: &Block) -> bool {
        b.is_genesis() || self.winner.is_winner(b.bid, b.slot)
    }
}

impl fmt::Debug for ChainRules {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainRules").field("hasher", &self.hasher).finish_non_exhaustive()
    }
}

struct Link {
    block: Block,
    len: usize,
    next: Option<Arc<Link>>,
}

/// Head-first sequence of blocks (index 0 has the highest slot). Stored as a
/// persistent list so that chains extending a common tail share it.
#[derive(Clone, Default)]
pub struct Chain {
    head: Option<Arc<Link>>,
}

impl Chain {
    pub fn empty() -> Self {
        Chain { head: None }
    }

    pub fn genesis() -> Self {
        Chain::empty().cons(Block::genesis())
    }

    /// Builds a chain from head-first blocks.
    pub fn from_blocks(blocks: impl IntoIterator<Item = Block>) -> Self {
        let blocks: Vec<Block> = blocks.into_iter().collect();
        blocks.into_iter().rev().fold(Chain::empty(), |c, b| c.cons(b))
    }

    /// New chain with `block` on top of `self`.
    pub fn cons(&self, block: Block) -> Chain {
        let len = self.len() + 1;
        Chain { head: Some(Arc::new(Link { block, len, next: self.head.clone() })) }
    }

    pub fn len(&self) -> usize {
        self.head.as_ref().map_or(0, |l| l.len)
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_none()
    }

    pub fn head(&self) -> Option<&Block> {
        self.head.as_deref().map(|l| &l.block)
    }

    /// The chain without its head.
    pub fn tail(&self) -> Chain {
        Chain { head: self.head.as_ref().and_then(|l| l.next.clone()) }
    }

    pub fn iter(&self) -> ChainIter<'_> {
        ChainIter { cur: self.head.as_deref() }
    }

    pub fn to_vec(&self) -> Vec<Block> {
        self.iter().cloned().collect()
    }

    /// The trailing segment of length `len` (shares storage).
    pub fn suffix(&self, len: usize) -> Option<Chain> {
        if len > self.len() {
            return None;
        }
        let mut cur = self.head.clone();
        while cur.as_ref().map_or(0, |l| l.len) > len {
            cur = cur.and_then(|l| l.next.clone());
        }
        Some(Chain { head: cur })
    }

    /// Address of the head link; equal ids imply equal chains.
    pub fn link_id(&self) -> Option<usize> {
        self.head.as_ref().map(|l| Arc::as_ptr(l) as usize)
    }

    pub fn same_storage(&self, other: &Chain) -> bool {
        match (&self.head, &other.head) {
            (None, None) => true,
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }

    pub fn hashes(&self, hasher: &BlockHasher) -> Vec<Hash> {
        self.iter().map(|b| hasher.hash_block(b)).collect()
    }
}

impl Drop for Chain {
    fn drop(&mut self) {
        let mut cur = self.head.take();
        while let Some(link) = cur {
            match Arc::try_unwrap(link) {
                Ok(mut l) => cur = l.next.take(),
                Err(_) => break,
            }
        }
    }
}

impl PartialEq for Chain {
    fn eq(&self, other: &Chain) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let (mut a, mut b) = (self.head.as_ref(), other.head.as_ref());
        loop {
            match (a, b) {
                (None, None) => return true,
                (Some(x), Some(y)) => {
                    if Arc::ptr_eq(x, y) {
                        return true;
                    }
                    if x.block != y.block {
                        return false;
                    }
                    a = x.next.as_ref();
                    b = y.next.as_ref();
                }
                _ => return false,
            }
        }
    }
}

impl Eq for Chain {}

impl fmt::Debug for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter().map(|b| (b.slot, b.bid.0))).finish()
    }
}

impl FromIterator<Block> for Chain {
    fn from_iter<I: IntoIterator<Item = Block>>(iter: I) -> Self {
        Chain::from_blocks(iter)
    }
}

pub struct ChainIter<'a> {
    cur: Option<&'a Link>,
}

impl<'a> Iterator for ChainIter<'a> {
    type Item = &'a Block;

    fn next(&mut self) -> Option<&'a Block> {
        let link = self.cur?;
        self.cur = link.next.as_deref();
        Some(&link.block)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.cur.map_or(0, |l| l.len);
        (n, Some(n))
    }
}

impl ExactSizeIterator for ChainIter<'_> {}

/// All blocks win their slot, each block points at the hash of its successor,
/// the last block is genesis and slots strictly decrease.
pub fn valid_chain(c: &Chain, rules: &ChainRules) -> bool {
    let blocks: Vec<&Block> = c.iter().collect();
    let Some(last) = blocks.last() else {
        return false;
    };
    if !last.is_genesis() {
        return false;
    }
    if !blocks.iter().all(|b| rules.block_valid(b)) {
        return false;
    }
    blocks.windows(2).all(|w| w[0].slot > w[1].slot && w[0].pred == rules.hash(w[1]))
}

/// Keeps the blocks with slot at most `slot`, order preserved.
pub fn prune(slot: Slot, c: &Chain) -> Chain {
    let mut cur = c.head.as_ref();
    while let Some(l) = cur {
        if l.block.slot <= slot {
            break;
        }
        cur = l.next.as_ref();
    }
    let rest = Chain { head: cur.cloned() };
    if rest.iter().all(|b| b.slot <= slot) {
        return rest;
    }
    rest.iter().filter(|b| b.slot <= slot).cloned().collect()
}

/// `c1 ⪯ c2`: `c1` is a trailing segment of the head-first `c2`.
pub fn is_prefix(c1: &Chain, c2: &Chain) -> bool {
    match c2.suffix(c1.len()) {
        Some(tail) => tail == *c1,
        None => false,
    }
}

/// Result of following predecessor pointers through a pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CfbOutcome {
    pub chain: Chain,
    /// Some pointer resolved to more than one distinct pool block.
    pub ambiguous: bool,
}

/// Hash index over a block pool, for repeated `cfb`/`pos` queries.
pub struct BlockPool<'a> {
    blocks: &'a [Block],
    hasher: BlockHasher,
    by_hash: HashMap<Hash, Vec<usize>>,
}

impl<'a> BlockPool<'a> {
    pub fn new(blocks: &'a [Block], hasher: BlockHasher) -> Self {
        let mut by_hash: HashMap<Hash, Vec<usize>> = HashMap::new();
        for (i, b) in blocks.iter().enumerate() {
            by_hash.entry(hasher.hash_block(b)).or_default().push(i);
        }
        BlockPool { blocks, hasher, by_hash }
    }

    pub fn hasher(&self) -> BlockHasher {
        self.hasher
    }

    /// Resolves `pred` to the first pool block with that hash.
    fn resolve(&self, pred: Hash) -> Option<(&'a Block, bool)> {
        let idx = self.by_hash.get(&pred)?;
        let first = &self.blocks[idx[0]];
        let ambiguous = idx.iter().any(|&i| self.blocks[i] != *first);
        Some((first, ambiguous))
    }

    pub fn cfb(&self, b: &Block) -> CfbOutcome {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut ambiguous = false;
        let mut cur = b.clone();
        loop {
            if !seen.insert(cur.clone()) {
                return CfbOutcome { chain: Chain::empty(), ambiguous };
            }
            let done = cur.is_genesis();
            out.push(cur.clone());
            if done {
                return CfbOutcome { chain: Chain::from_blocks(out), ambiguous };
            }
            match self.resolve(cur.pred) {
                Some((next, amb)) => {
                    ambiguous |= amb;
                    cur = next.clone();
                }
                None => return CfbOutcome { chain: Chain::empty(), ambiguous },
            }
        }
    }

    pub fn pos(&self, b: &Block) -> usize {
        self.cfb(b).chain.len()
    }
}

/// Chain obtained by following `pred` pointers from `b` through `bp` down to
/// genesis; empty when a pointer does not resolve or a cycle is found.
pub fn cfb(b: &Block, bp: &[Block], hasher: BlockHasher) -> Chain {
    BlockPool::new(bp, hasher).cfb(b).chain
}

pub fn pos(b: &Block, bp: &[Block], hasher: BlockHasher) -> usize {
    cfb(b, bp, hasher).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules_all_win() -> ChainRules {
        ChainRules::new(BlockHasher::default(), Arc::new(|_: PartyId, _: Slot| true))
    }

    fn child(parent: &Block, slot: Slot, bid: u32) -> Block {
        Block::new(BlockHasher::default().hash_block(parent), slot, Payload::empty(), PartyId(bid))
    }

    #[test]
    fn hash_is_deterministic_and_width_bounded() {
        let b = child(&Block::genesis(), 3, 1);
        let h = BlockHasher::default();
        assert_eq!(h.hash_block(&b), h.hash_block(&b));
        let small = BlockHasher::new(16).unwrap();
        assert!(small.hash_block(&b).0 < (1 << 16));
        assert!(BlockHasher::new(0).is_err());
        assert!(BlockHasher::new(65).is_err());
    }

    #[test]
    fn encoding_layout_is_fixed() {
        let b = Block::new(Hash(0x0102), 7, Payload::new(vec![0xaa, 0xbb]), PartyId(5));
        let enc = b.encode();
        assert_eq!(enc.len(), 8 + 8 + 8 + 2 + 4);
        assert_eq!(&enc[0..8], &0x0102u64.to_le_bytes());
        assert_eq!(&enc[8..16], &7u64.to_le_bytes());
        assert_eq!(&enc[16..24], &2u64.to_le_bytes());
        assert_eq!(&enc[24..26], &[0xaa, 0xbb]);
        assert_eq!(&enc[26..30], &5u32.to_le_bytes());
    }

    #[test]
    fn genesis_hash_is_stable() {
        // Frozen so that changes to the encoding or mixer are caught.
        let h = BlockHasher::default().hash_block(&Block::genesis());
        let h16 = BlockHasher::new(16).unwrap().hash_block(&Block::genesis());
        assert_eq!(h16.0, h.0 & 0xffff);
        assert_eq!(h, BlockHasher::default().hash_bytes(&[0u8; 28]));
    }

    #[test]
    fn valid_chain_examples() {
        let rules = rules_all_win();
        assert!(valid_chain(&Chain::genesis(), &rules));
        assert!(!valid_chain(&Chain::empty(), &rules));

        let g = Block::genesis();
        let b = child(&g, 2, 1);
        let c = Chain::from_blocks(vec![b.clone(), g.clone()]);
        assert!(valid_chain(&c, &rules));

        let mut flipped = b.clone();
        flipped.pred = Hash(flipped.pred.0 ^ 1);
        assert!(!valid_chain(&Chain::from_blocks(vec![flipped, g.clone()]), &rules));

        let loser = ChainRules::new(BlockHasher::default(), Arc::new(|_: PartyId, s: Slot| s != 2));
        assert!(!valid_chain(&c, &loser));

        let same_slot = child(&g, 0, 1);
        assert!(!valid_chain(&Chain::from_blocks(vec![same_slot, g]), &rules));
    }

    fn sample_chain() -> (Chain, [Block; 5]) {
        let g = Block::genesis();
        let b1 = child(&g, 1, 1);
        let b3 = child(&b1, 3, 1);
        let b4 = child(&b3, 4, 2);
        let b7 = child(&b4, 7, 1);
        let c = Chain::from_blocks(vec![b7.clone(), b4.clone(), b3.clone(), b1.clone(), g.clone()]);
        (c, [b7, b4, b3, b1, g])
    }

    #[test]
    fn prune_examples() {
        assert!(prune(5, &Chain::empty()).is_empty());
        let (c, [_, _, b3, b1, g]) = sample_chain();
        assert_eq!(prune(10, &c), c);
        assert_eq!(prune(3, &c), Chain::from_blocks(vec![b3, b1, g]));
    }

    #[test]
    fn prune_of_unordered_chain_filters() {
        let g = Block::genesis();
        let hi = child(&g, 9, 1);
        let lo = child(&g, 2, 1);
        let c = Chain::from_blocks(vec![lo.clone(), hi, g.clone()]);
        assert_eq!(prune(5, &c), Chain::from_blocks(vec![lo, g]));
    }

    #[test]
    fn prefix_examples() {
        let g = Block::genesis();
        let b1 = child(&g, 1, 1);
        let b4 = child(&b1, 4, 1);
        let b7 = child(&b4, 7, 1);
        let c = Chain::from_blocks(vec![b7, b4.clone(), b1.clone(), g.clone()]);
        assert!(is_prefix(&c, &c));
        assert!(is_prefix(&Chain::empty(), &c));
        assert!(is_prefix(&Chain::from_blocks(vec![b1, g.clone()]), &c));
        assert!(!is_prefix(&Chain::from_blocks(vec![b4, g]), &c));
        assert!(!is_prefix(&c, &c.tail()));
    }

    #[test]
    fn cfb_and_pos_examples() {
        let h = BlockHasher::default();
        let g = Block::genesis();
        assert_eq!(cfb(&g, &[], h), Chain::genesis());
        assert_eq!(pos(&g, &[], h), 1);

        let b1 = child(&g, 1, 1);
        let b2 = child(&b1, 2, 1);
        assert!(cfb(&b2, &[], h).is_empty());
        assert_eq!(pos(&b2, &[], h), 0);

        let bp = vec![g.clone(), b1.clone(), b2.clone()];
        assert_eq!(cfb(&b2, &bp, h), Chain::from_blocks(vec![b2.clone(), b1, g]));
        assert_eq!(pos(&b2, &bp, h), 3);
    }

    #[test]
    fn cfb_detects_cycles() {
        // A self-referencing block exists at width 1.
        let tiny = BlockHasher::new(1).unwrap();
        let a = (0u8..)
            .map(|i| Block::new(Hash(0), 5, Payload::new(vec![i]), PartyId(1)))
            .find(|b| tiny.hash_block(b) == Hash(0))
            .unwrap();
        let pool = vec![a.clone()];
        let out = BlockPool::new(&pool, tiny).cfb(&a);
        assert!(out.chain.is_empty());
    }

    #[test]
    fn cfb_flags_ambiguity() {
        let tiny = BlockHasher::new(1).unwrap();
        let g = Block::genesis();
        let gh = tiny.hash_block(&g);
        // A second block sharing genesis's 1-bit hash, listed before genesis.
        let twin = (0u8..)
            .map(|i| Block::new(Hash(9), 1, Payload::new(vec![i]), PartyId(3)))
            .find(|b| tiny.hash_block(b) == gh)
            .unwrap();
        let top = Block::new(gh, 4, Payload::empty(), PartyId(1));
        let pool = vec![twin, g.clone()];
        let out = BlockPool::new(&pool, tiny).cfb(&top);
        assert!(out.ambiguous);
    }

    #[test]
    fn long_chains_drop_without_recursion() {
        let mut c = Chain::genesis();
        for s in 1..200_000u64 {
            c = c.cons(Block::new(Hash(s), s, Payload::empty(), PartyId(1)));
        }
        assert_eq!(c.len(), 200_000);
        drop(c);
    }

    #[test]
    fn payload_hex_round_trip() {
        let p = Payload::new(vec![0, 15, 255]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "\"000fff\"");
        let back: Payload = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Payload>("\"abc\"").is_err());
    }
}
