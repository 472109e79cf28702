//! Fast evaluation of four-fold coincidence probabilities.
//!
//! The direct route in [`crate::interference::joint_outcomes`] interferes
//! every branch explicitly. Here the same numbers are obtained by moving
//! the relays into the Heisenberg picture: for each photon-number term of
//! Alice's (Bob's) pulse, David's (Ethan's) measurement becomes a POVM on the
//! entangled-source side, block-diagonal in photon number. Contracting the
//! POVMs with the source density matrix after the links gives a table
//! `T_n[a, outcome_D, b, outcome_E]` per pair number `n`. Intensities only
//! enter as weights on that table, which is what makes the optimizer cheap.

use num_complex::Complex64;

use crate::channel::{propagate_epr, ChannelParams};
use crate::error::Result;
use crate::fock::{fock_states, pdc_sector, to_hv, Basis, Occupation};
use crate::interference::{
    bsm_weights, interfere_mode_pair, BeamSplitterSpec, DetectorParams, JointOutcomeDistribution,
};
use crate::math::two_mode_state_count;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Square complex matrix, row-major.
#[derive(Debug, Clone)]
struct Block {
    dim: usize,
    data: Vec<Complex64>,
}

impl Block {
    fn zeros(dim: usize) -> Self {
        Block { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }
}

/// POVM element on Charles' side of one relay, one block per photon number.
type Povm = Vec<Block>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// David: the party's pulse on port 1, Charles' photon on port 2.
    David,
    /// Ethan: Charles' photon on port 1, the party's pulse on port 2.
    Ethan,
}

/// Relay measurement operators for every party photon-number term.
#[derive(Debug, Clone)]
pub struct RelayModel {
    n_max: u32,
    detector: DetectorParams,
    bs: BeamSplitterSpec,
    /// `[basis][side][party term][outcome]`
    povms: [[Vec<[Povm; 3]>; 2]; 2],
}

fn basis_slot(basis: Basis) -> usize {
    match basis {
        Basis::Z => 0,
        Basis::X => 1,
    }
}

impl RelayModel {
    pub fn new(detector: DetectorParams, bs: BeamSplitterSpec, n_max: u32) -> Result<Self> {
        let mut povms: [[Vec<[Povm; 3]>; 2]; 2] = Default::default();
        for basis in [Basis::Z, Basis::X] {
            for (s, side) in [Side::David, Side::Ethan].into_iter().enumerate() {
                let mut per_term = Vec::new();
                for occ in fock_states(n_max) {
                    per_term.push(relay_povm(occ, basis, side, &detector, &bs, n_max)?);
                }
                povms[basis_slot(basis)][s] = per_term;
            }
        }
        Ok(RelayModel { n_max, detector, bs, povms })
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn detector(&self) -> &DetectorParams {
        &self.detector
    }

    pub fn beam_splitter(&self) -> &BeamSplitterSpec {
        &self.bs
    }

    /// Coincidence tables for Charles' two links.
    pub fn coincidences(&self, ch_d: &ChannelParams, ch_e: &ChannelParams) -> Result<CoincidenceTable> {
        let states = two_mode_state_count(self.n_max);
        let mut tables = [Vec::new(), Vec::new()];
        for n in 0..=self.n_max {
            let blocks = source_blocks(n, ch_d, ch_e, self.n_max)?;
            for basis in [Basis::Z, Basis::X] {
                let slot = basis_slot(basis);
                let david = &self.povms[slot][0];
                let ethan = &self.povms[slot][1];
                tables[slot].push(contract(&blocks, david, ethan, states));
            }
        }
        Ok(CoincidenceTable { states, tables })
    }
}

fn relay_povm(
    party: Occupation,
    basis: Basis,
    side: Side,
    det: &DetectorParams,
    bs: &BeamSplitterSpec,
    n_max: u32,
) -> Result<[Povm; 3]> {
    let party_state = to_hv(party, basis);
    let mut out: [Povm; 3] = Default::default();
    for k in 0..=n_max {
        let dim = k as usize + 1;
        let rails: Vec<_> = (0..=k)
            .map(|v| {
                let charles = [(Occupation::new(k - v, v), ONE)];
                match side {
                    Side::David => interfere_mode_pair(&party_state, &charles, bs, 2 * n_max),
                    Side::Ethan => interfere_mode_pair(&charles, &party_state, bs, 2 * n_max),
                }
            })
            .collect::<Result<_>>()?;
        let mut blocks = [Block::zeros(dim), Block::zeros(dim), Block::zeros(dim)];
        for x in 0..dim {
            for y in 0..dim {
                for (occ, ay) in rails[y].iter() {
                    let ax = rails[x].amplitude(occ);
                    let prod = ax.conj() * ay;
                    if prod.norm_sqr() == 0.0 {
                        continue;
                    }
                    let w = bsm_weights(occ[0], occ[1], det);
                    for o in 0..3 {
                        blocks[o].data[x * dim + y] += prod * w[o];
                    }
                }
            }
        }
        for (o, b) in blocks.into_iter().enumerate() {
            out[o].push(b);
        }
    }
    Ok(out)
}

/// `σ[(x,j),(y,j')] = Σ_records ψ*(x,j) ψ(y,j')` for each (David, Ethan)
/// photon-number block of the n-pair sector after the links.
struct SourceBlock {
    kd: usize,
    ke: usize,
    sigma: Vec<Complex64>,
}

fn source_blocks(n: u32, ch_d: &ChannelParams, ch_e: &ChannelParams, n_max: u32) -> Result<Vec<SourceBlock>> {
    let mix = propagate_epr(&pdc_sector(n), ch_d, ch_e, n_max)?;
    let mut blocks: Vec<SourceBlock> = Vec::new();
    for (_, comp) in mix.iter() {
        let Some((first, _)) = comp.iter().next() else { continue };
        let (kd, ke) = (first[0].total() as usize, first[1].total() as usize);
        let (dd, de) = (kd + 1, ke + 1);
        let mut psi = vec![Complex64::new(0.0, 0.0); dd * de];
        for (occ, a) in comp.iter() {
            debug_assert_eq!(occ[0].total() as usize, kd);
            psi[occ[0].v as usize * de + occ[1].v as usize] += a;
        }
        let block = match blocks.iter_mut().position(|b| b.kd == kd && b.ke == ke) {
            Some(i) => &mut blocks[i],
            None => {
                blocks.push(SourceBlock { kd, ke, sigma: vec![Complex64::new(0.0, 0.0); (dd * de).pow(2)] });
                blocks.last_mut().expect("just pushed")
            }
        };
        let dim = dd * de;
        for (r, pr) in psi.iter().enumerate() {
            if pr.norm_sqr() == 0.0 {
                continue;
            }
            let pc = pr.conj();
            for (c, pcol) in psi.iter().enumerate() {
                block.sigma[r * dim + c] += pc * pcol;
            }
        }
    }
    Ok(blocks)
}

fn contract(blocks: &[SourceBlock], david: &[[Povm; 3]], ethan: &[[Povm; 3]], states: usize) -> Vec<f64> {
    let mut table = vec![0.0; states * states * 9];
    for block in blocks {
        let (dd, de) = (block.kd + 1, block.ke + 1);
        let dim = dd * de;
        for (a, povm_a) in david.iter().enumerate() {
            for od in 0..3 {
                let m_d = &povm_a[od][block.kd];
                // partial contraction over David's side
                let mut reduced = vec![Complex64::new(0.0, 0.0); de * de];
                let mut nonzero = false;
                for x in 0..dd {
                    for y in 0..dd {
                        let m = m_d.at(x, y);
                        if m.norm_sqr() == 0.0 {
                            continue;
                        }
                        nonzero = true;
                        for j in 0..de {
                            let row = (x * de + j) * dim + y * de;
                            for jp in 0..de {
                                reduced[j * de + jp] += block.sigma[row + jp] * m;
                            }
                        }
                    }
                }
                if !nonzero {
                    continue;
                }
                for (b, povm_b) in ethan.iter().enumerate() {
                    for oe in 0..3 {
                        let m_e = &povm_b[oe][block.ke];
                        let mut acc = 0.0;
                        for (idx, r) in reduced.iter().enumerate() {
                            let m = m_e.data[idx];
                            acc += r.re * m.re - r.im * m.im;
                        }
                        table[((a * states + b) * 3 + od) * 3 + oe] += acc;
                    }
                }
            }
        }
    }
    table
}

/// Per-pair-number coincidence probabilities for one pair of Charles' links.
#[derive(Debug, Clone)]
pub struct CoincidenceTable {
    states: usize,
    /// `[basis][n][((a * states + b) * 3 + o_D) * 3 + o_E]`
    tables: [Vec<Vec<f64>>; 2],
}

impl CoincidenceTable {
    /// Joint outcome probabilities for party weight vectors `alice` and `bob`
    /// (indexed by [`Occupation::index`] in `basis` modes) and the pair-number
    /// distribution `pairs`.
    pub fn outcomes(&self, basis: Basis, pairs: &[f64], alice: &[f64], bob: &[f64]) -> JointOutcomeDistribution {
        let s = self.states;
        let mut probs = [[0.0; 3]; 3];
        let mut mass = 0.0;
        let wa: f64 = alice.iter().sum();
        let wb: f64 = bob.iter().sum();
        for (n, table) in self.tables[basis_slot(basis)].iter().enumerate() {
            let pn = pairs.get(n).copied().unwrap_or(0.0);
            if pn == 0.0 {
                continue;
            }
            mass += pn * wa * wb;
            for (a, &xa) in alice.iter().enumerate().take(s) {
                if xa == 0.0 {
                    continue;
                }
                for (b, &xb) in bob.iter().enumerate().take(s) {
                    if xb == 0.0 {
                        continue;
                    }
                    let w = pn * xa * xb;
                    let base = (a * s + b) * 9;
                    for od in 0..3 {
                        for oe in 0..3 {
                            probs[od][oe] += w * table[base + od * 3 + oe];
                        }
                    }
                }
            }
        }
        JointOutcomeDistribution { probs, unresolved: (1.0 - mass).max(0.0) }
    }
}
