//! The shared atom pool behind the latent matrices.
//!
//! Each platform is a restaurant whose customers are latent cells. Cells sit
//! at tables, tables are served dishes from a franchise-wide menu, and a
//! dish's value is the latent value of every cell seated at one of its tables.
//! Two latent cells in different platforms that share a dish are therefore
//! equal by construction.
//!
//! [`AtomStore::Fixed`] replaces the hierarchy by a known discrete measure,
//! which keeps small models exactly enumerable.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{AtomId, BlockStats, LatentCell, LatentMatrices, TableId};

#[derive(Debug, Clone, PartialEq)]
pub struct Dish {
    pub value: f64,
    pub tables: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub dish: AtomId,
    pub cells: usize,
}

/// Mass parameters and base measure of the two-level hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FranchiseParams {
    /// Mass of each platform measure around the shared base.
    pub local_mass: f64,
    /// Mass of the shared base around the normal base measure.
    pub global_mass: f64,
    pub mu0: f64,
    pub tau0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Franchise {
    pub params: FranchiseParams,
    pub dishes: BTreeMap<AtomId, Dish>,
    pub restaurants: Vec<BTreeMap<TableId, Table>>,
    total_tables: usize,
    cells_in: Vec<usize>,
    next_dish: AtomId,
    next_table: TableId,
}

/// A fixed discrete measure over atoms `0..values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAtoms {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AtomStore {
    Franchise(Franchise),
    Fixed(FixedAtoms),
}

/// Log-likelihood of the data behind a cell at mean `theta`, up to terms that
/// do not depend on `theta`.
#[inline]
pub fn reduced_log_lik(theta: f64, stats: &BlockStats, inv_var: f64) -> f64 {
    (theta * stats.sum - 0.5 * stats.count * theta * theta) * inv_var
}

/// Same reduction of the likelihood integrated against `N(mu0, tau0²)`.
pub fn reduced_log_marginal(stats: &BlockStats, inv_var: f64, mu0: f64, tau0: f64) -> f64 {
    let prior_prec = 1.0 / (tau0 * tau0);
    let prec = prior_prec + stats.count * inv_var;
    let mean = (mu0 * prior_prec + stats.sum * inv_var) / prec;
    -0.5 * (prec / prior_prec).ln() + 0.5 * prec * mean * mean - 0.5 * mu0 * mu0 * prior_prec
}

/// Normal posterior (mean, sd) of a cell mean under `N(mu0, tau0²)`.
pub fn normal_posterior(stats: &BlockStats, inv_var: f64, mu0: f64, tau0: f64) -> (f64, f64) {
    let prior_prec = 1.0 / (tau0 * tau0);
    let prec = prior_prec + stats.count * inv_var;
    ((mu0 * prior_prec + stats.sum * inv_var) / prec, prec.sqrt().recip())
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draw an index with probability proportional to `exp(log_w)`.
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|x| (x - m).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, x) in log_w.iter().enumerate() {
        u -= (x - m).exp();
        if u < 0.0 {
            return i;
        }
    }
    log_w
        .iter()
        .rposition(|x| x.is_finite())
        .unwrap_or(log_w.len() - 1)
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

impl Franchise {
    pub fn new(params: FranchiseParams, n_platforms: usize) -> Self {
        Self {
            params,
            dishes: BTreeMap::new(),
            restaurants: vec![BTreeMap::new(); n_platforms],
            total_tables: 0,
            cells_in: vec![0; n_platforms],
            next_dish: 0,
            next_table: 0,
        }
    }

    pub fn total_tables(&self) -> usize {
        self.total_tables
    }

    fn new_dish(&mut self, value: f64) -> AtomId {
        let id = self.next_dish;
        self.next_dish += 1;
        self.dishes.insert(id, Dish { value, tables: 0 });
        id
    }

    fn open_table(&mut self, t: usize, dish: AtomId) -> TableId {
        let id = self.next_table;
        self.next_table += 1;
        self.restaurants[t].insert(id, Table { dish, cells: 0 });
        self.dishes.get_mut(&dish).expect("dish exists").tables += 1;
        self.total_tables += 1;
        id
    }

    fn sit(&mut self, t: usize, table: TableId) -> LatentCell {
        let tab = self.restaurants[t].get_mut(&table).expect("table exists");
        tab.cells += 1;
        let dish = tab.dish;
        self.cells_in[t] += 1;
        LatentCell {
            value: self.dishes[&dish].value,
            atom: dish,
            table,
        }
    }

    fn unseat(&mut self, t: usize, cell: &LatentCell) {
        let tab = self.restaurants[t]
            .get_mut(&cell.table)
            .expect("cell references a live table");
        tab.cells -= 1;
        self.cells_in[t] -= 1;
        if tab.cells == 0 {
            let dish = tab.dish;
            self.restaurants[t].remove(&cell.table);
            self.total_tables -= 1;
            self.drop_table_from_dish(dish);
        }
    }

    fn drop_table_from_dish(&mut self, dish: AtomId) {
        let d = self.dishes.get_mut(&dish).expect("table references a live dish");
        d.tables -= 1;
        if d.tables == 0 {
            self.dishes.remove(&dish);
        }
    }

    /// Pick a dish for a new table: existing dishes weighted by table counts,
    /// or a new dish with mass `global_mass`. `log_lik` scores a dish value,
    /// `log_marg` scores a new dish. Returns `None` for a new dish.
    fn choose_dish<R: Rng + ?Sized>(
        &self,
        log_lik: impl Fn(f64) -> f64,
        log_marg: f64,
        rng: &mut R,
    ) -> Option<AtomId> {
        let mut ids = Vec::with_capacity(self.dishes.len());
        let mut w = Vec::with_capacity(self.dishes.len() + 1);
        for (&id, d) in &self.dishes {
            ids.push(id);
            w.push((d.tables as f64).ln() + log_lik(d.value));
        }
        w.push(self.params.global_mass.ln() + log_marg);
        let pick = sample_log_weights(&w, rng);
        ids.get(pick).copied()
    }

    /// Seat a new cell in restaurant `t` drawn from the prior predictive.
    pub fn seat_from_prior<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> LatentCell {
        let p = self.params;
        let mut u = rng.random::<f64>() * (self.cells_in[t] as f64 + p.local_mass);
        let mut table = None;
        for (&id, tab) in &self.restaurants[t] {
            u -= tab.cells as f64;
            if u < 0.0 {
                table = Some(id);
                break;
            }
        }
        let table = match table {
            Some(id) => id,
            None => {
                let mut u = rng.random::<f64>() * (self.total_tables as f64 + p.global_mass);
                let mut dish = None;
                for (&id, d) in &self.dishes {
                    u -= d.tables as f64;
                    if u < 0.0 {
                        dish = Some(id);
                        break;
                    }
                }
                let dish = match dish {
                    Some(d) => d,
                    None => {
                        let v = p.mu0 + p.tau0 * std_normal(rng);
                        self.new_dish(v)
                    }
                };
                self.open_table(t, dish)
            }
        };
        self.sit(t, table)
    }

    /// Seat a cell in restaurant `t` from its conditional given the data it
    /// explains.
    pub fn seat_given_data<R: Rng + ?Sized>(
        &mut self,
        t: usize,
        stats: &BlockStats,
        inv_var: f64,
        rng: &mut R,
    ) -> LatentCell {
        let p = self.params;
        let marg = reduced_log_marginal(stats, inv_var, p.mu0, p.tau0);
        // Predictive density of the data under a fresh table.
        let mut dish_terms = Vec::with_capacity(self.dishes.len() + 1);
        for d in self.dishes.values() {
            dish_terms.push((d.tables as f64).ln() + reduced_log_lik(d.value, stats, inv_var));
        }
        dish_terms.push(p.global_mass.ln() + marg);
        let new_table = p.local_mass.ln() + log_sum_exp(&dish_terms)
            - (self.total_tables as f64 + p.global_mass).ln();

        let mut ids = Vec::with_capacity(self.restaurants[t].len());
        let mut w = Vec::with_capacity(self.restaurants[t].len() + 1);
        for (&id, tab) in &self.restaurants[t] {
            ids.push(id);
            let v = self.dishes[&tab.dish].value;
            w.push((tab.cells as f64).ln() + reduced_log_lik(v, stats, inv_var));
        }
        w.push(new_table);
        let pick = sample_log_weights(&w, rng);
        let table = match ids.get(pick) {
            Some(&id) => id,
            None => {
                let pick = sample_log_weights(&dish_terms, rng);
                let dish = match self.dishes.keys().nth(pick) {
                    Some(&d) => d,
                    None => {
                        let (m, s) = normal_posterior(stats, inv_var, p.mu0, p.tau0);
                        let v = m + s * std_normal(rng);
                        self.new_dish(v)
                    }
                };
                self.open_table(t, dish)
            }
        };
        self.sit(t, table)
    }

    /// Seat a cell at a fresh table serving a fresh dish of the given value.
    pub fn seat_new_dish(&mut self, t: usize, value: f64) -> LatentCell {
        let dish = self.new_dish(value);
        let table = self.open_table(t, dish);
        self.sit(t, table)
    }
}

impl FixedAtoms {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::Argument("fixed atoms need matching nonempty values and weights".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| w.is_nan() || *w <= 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::Argument("fixed atom weights must be positive and sum to 1".into()));
        }
        Ok(Self { values, weights })
    }

    fn cell(&self, atom: usize) -> LatentCell {
        LatentCell {
            value: self.values[atom],
            atom: atom as AtomId,
            table: atom as TableId,
        }
    }
}

impl AtomStore {
    pub fn franchise(params: FranchiseParams, n_platforms: usize) -> Self {
        AtomStore::Franchise(Franchise::new(params, n_platforms))
    }

    pub fn seat_from_prior<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> LatentCell {
        match self {
            AtomStore::Franchise(f) => f.seat_from_prior(t, rng),
            AtomStore::Fixed(a) => {
                let mut u = rng.random::<f64>();
                let mut pick = a.weights.len() - 1;
                for (l, w) in a.weights.iter().enumerate() {
                    u -= w;
                    if u < 0.0 {
                        pick = l;
                        break;
                    }
                }
                a.cell(pick)
            }
        }
    }

    pub fn seat_given_data<R: Rng + ?Sized>(
        &mut self,
        t: usize,
        stats: &BlockStats,
        inv_var: f64,
        rng: &mut R,
    ) -> LatentCell {
        match self {
            AtomStore::Franchise(f) => f.seat_given_data(t, stats, inv_var, rng),
            AtomStore::Fixed(a) => {
                let w: Vec<f64> = a
                    .values
                    .iter()
                    .zip(&a.weights)
                    .map(|(&v, &w)| w.ln() + reduced_log_lik(v, stats, inv_var))
                    .collect();
                a.cell(sample_log_weights(&w, rng))
            }
        }
    }

    /// Seat used by initialisation: a fresh atom at the block mean under the
    /// hierarchy, or the best-scoring atom of a fixed measure.
    pub fn seat_initial<R: Rng + ?Sized>(
        &mut self,
        t: usize,
        stats: &BlockStats,
        inv_var: f64,
        rng: &mut R,
    ) -> LatentCell {
        match self {
            AtomStore::Franchise(f) => f.seat_new_dish(t, stats.mean()),
            AtomStore::Fixed(_) => self.seat_given_data(t, stats, inv_var, rng),
        }
    }

    pub fn unseat(&mut self, t: usize, cell: &LatentCell) {
        if let AtomStore::Franchise(f) = self {
            f.unseat(t, cell);
        }
    }

    pub fn n_atoms(&self) -> usize {
        match self {
            AtomStore::Franchise(f) => f.dishes.len(),
            AtomStore::Fixed(a) => a.values.len(),
        }
    }

    /// Check reference counts and values against the latent matrices.
    pub fn validate(&self, latents: &LatentMatrices) -> Result<()> {
        match self {
            AtomStore::Fixed(a) => {
                for m in &latents.platforms {
                    for c in m.cells() {
                        let l = c.atom as usize;
                        if l >= a.values.len() || a.values[l] != c.value {
                            return Err(Error::Structural(format!("cell references bad atom {l}")));
                        }
                    }
                }
                Ok(())
            }
            AtomStore::Franchise(f) => {
                let mut table_cells: Vec<BTreeMap<TableId, usize>> =
                    vec![BTreeMap::new(); f.restaurants.len()];
                for (t, m) in latents.platforms.iter().enumerate() {
                    for c in m.cells() {
                        let tab = f.restaurants[t].get(&c.table).ok_or_else(|| {
                            Error::Structural(format!("cell references missing table {}", c.table))
                        })?;
                        if tab.dish != c.atom {
                            return Err(Error::Structural("cell atom differs from its table's dish".into()));
                        }
                        if f.dishes[&c.atom].value.to_bits() != c.value.to_bits() {
                            return Err(Error::Structural("cell value differs from its atom".into()));
                        }
                        *table_cells[t].entry(c.table).or_default() += 1;
                    }
                }
                let mut dish_tables: BTreeMap<AtomId, usize> = BTreeMap::new();
                let mut total = 0;
                for (t, r) in f.restaurants.iter().enumerate() {
                    let mut cells = 0;
                    for (id, tab) in r {
                        if table_cells[t].get(id).copied().unwrap_or(0) != tab.cells || tab.cells == 0 {
                            return Err(Error::Structural(format!("table {id} cell count is wrong")));
                        }
                        cells += tab.cells;
                        *dish_tables.entry(tab.dish).or_default() += 1;
                        total += 1;
                    }
                    if cells != f.cells_in[t] {
                        return Err(Error::Structural("restaurant cell total is wrong".into()));
                    }
                }
                if total != f.total_tables {
                    return Err(Error::Structural("table total is wrong".into()));
                }
                if dish_tables.len() != f.dishes.len()
                    || dish_tables.iter().any(|(id, n)| f.dishes.get(id).map(|d| d.tables) != Some(*n))
                {
                    return Err(Error::Structural("dish table counts are wrong".into()));
                }
                Ok(())
            }
        }
    }
}

/// Resample every latent cell's seat given the data it explains, then every
/// table's dish, then every dish value. Cell values are refreshed throughout.
pub fn update_latent_atoms<R: Rng + ?Sized>(
    latents: &mut LatentMatrices,
    store: &mut AtomStore,
    stats: &[Vec<BlockStats>],
    rng: &mut R,
) {
    let inv_vars: Vec<f64> = latents.noise_sd.iter().map(|s| 1.0 / (s * s)).collect();
    // (a) cell seats
    for t in 0..latents.platforms.len() {
        for (c, block) in stats[t].iter().enumerate() {
            let old = latents.platforms[t].cells()[c];
            store.unseat(t, &old);
            latents.platforms[t].cells_mut()[c] = store.seat_given_data(t, block, inv_vars[t], rng);
        }
    }
    let AtomStore::Franchise(f) = store else {
        return;
    };
    // (b) table dishes
    for t in 0..latents.platforms.len() {
        let mut by_table: BTreeMap<TableId, (BlockStats, Vec<usize>)> = BTreeMap::new();
        for (c, cell) in latents.platforms[t].cells().iter().enumerate() {
            let e = by_table.entry(cell.table).or_default();
            e.0.merge(&stats[t][c]);
            e.1.push(c);
        }
        for (table, (tstats, cells)) in by_table {
            let old_dish = f.restaurants[t][&table].dish;
            f.drop_table_from_dish(old_dish);
            f.total_tables -= 1;
            let p = f.params;
            let marg = reduced_log_marginal(&tstats, inv_vars[t], p.mu0, p.tau0);
            let dish = match f.choose_dish(|v| reduced_log_lik(v, &tstats, inv_vars[t]), marg, rng) {
                Some(d) => d,
                None => {
                    let (m, s) = normal_posterior(&tstats, inv_vars[t], p.mu0, p.tau0);
                    let v = m + s * std_normal(rng);
                    f.new_dish(v)
                }
            };
            f.dishes.get_mut(&dish).expect("dish").tables += 1;
            f.total_tables += 1;
            f.restaurants[t].get_mut(&table).expect("table").dish = dish;
            let value = f.dishes[&dish].value;
            for c in cells {
                let cell = &mut latents.platforms[t].cells_mut()[c];
                cell.atom = dish;
                cell.value = value;
            }
        }
    }
    // (c) dish values
    let p = f.params;
    let prior_prec = 1.0 / (p.tau0 * p.tau0);
    let mut acc: BTreeMap<AtomId, (f64, f64)> = BTreeMap::new();
    for (t, m) in latents.platforms.iter().enumerate() {
        for (c, cell) in m.cells().iter().enumerate() {
            let e = acc.entry(cell.atom).or_insert((0.0, 0.0));
            e.0 += stats[t][c].count * inv_vars[t];
            e.1 += stats[t][c].sum * inv_vars[t];
        }
    }
    for (id, (prec_data, sum)) in acc {
        let prec = prior_prec + prec_data;
        let mean = (p.mu0 * prior_prec + sum) / prec;
        let v = mean + std_normal(rng) / prec.sqrt();
        f.dishes.get_mut(&id).expect("dish").value = v;
    }
    for m in latents.platforms.iter_mut() {
        for cell in m.cells_mut() {
            cell.value = f.dishes[&cell.atom].value;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatentMatrix;
    use crate::rng;

    fn params() -> FranchiseParams {
        FranchiseParams {
            local_mass: 1.0,
            global_mass: 1.0,
            mu0: 0.0,
            tau0: 1.0,
        }
    }

    #[test]
    fn marginal_matches_quadrature() {
        let stats = BlockStats {
            count: 3.0,
            sum: 2.1,
            sum_sq: 1.9,
        };
        let inv_var = 1.0 / 0.25;
        let (mu0, tau0) = (0.3, 0.8);
        // trapezoid on a wide grid
        let (lo, hi, n) = (-8.0, 8.0, 200_000);
        let h = (hi - lo) / n as f64;
        let mut integral = 0.0;
        for i in 0..=n {
            let th = lo + i as f64 * h;
            let prior = (-(th - mu0) * (th - mu0) / (2.0 * tau0 * tau0)).exp()
                / (tau0 * (2.0 * std::f64::consts::PI).sqrt());
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            integral += w * h * prior * reduced_log_lik(th, &stats, inv_var).exp();
        }
        let got = reduced_log_marginal(&stats, inv_var, mu0, tau0);
        assert!((got - integral.ln()).abs() < 1e-8, "{got} vs {}", integral.ln());
    }

    #[test]
    fn conjugate_dish_posterior_for_a_single_cell() {
        // One cell, one dish: the dish value after many updates averages to
        // the conjugate posterior mean.
        let mut store = AtomStore::franchise(params(), 1);
        let mut r = rng::stream(11, 0);
        let stats = vec![vec![BlockStats {
            count: 4.0,
            sum: 6.0,
            sum_sq: 9.5,
        }]];
        let cell = store.seat_initial(0, &stats[0][0], 1.0, &mut r);
        let mut latents = LatentMatrices {
            platforms: vec![LatentMatrix::new(1, 1, vec![cell]).unwrap()],
            noise_sd: vec![1.0],
        };
        let mut total = 0.0;
        let iters = 20_000;
        for _ in 0..iters {
            update_latent_atoms(&mut latents, &mut store, &stats, &mut r);
            store.validate(&latents).unwrap();
            total += latents.phi(0, 0, 0);
        }
        let want = (0.0 + 6.0) / (1.0 + 4.0);
        assert!((total / iters as f64 - want).abs() < 0.02);
    }

    #[test]
    fn shared_dish_gives_identical_values_across_platforms() {
        let mut store = AtomStore::franchise(params(), 2);
        let mut r = rng::stream(2, 0);
        let s = BlockStats {
            count: 50.0,
            sum: 50.0,
            sum_sq: 51.0,
        };
        let a = store.seat_initial(0, &s, 100.0, &mut r);
        let b = store.seat_initial(1, &s, 100.0, &mut r);
        let mut latents = LatentMatrices {
            platforms: vec![
                LatentMatrix::new(1, 1, vec![a]).unwrap(),
                LatentMatrix::new(1, 1, vec![b]).unwrap(),
            ],
            noise_sd: vec![0.1, 0.1],
        };
        let stats = vec![vec![s], vec![s]];
        let mut shared = 0;
        for _ in 0..200 {
            update_latent_atoms(&mut latents, &mut store, &stats, &mut r);
            store.validate(&latents).unwrap();
            let (x, y) = (latents.platforms[0].cell(0, 0), latents.platforms[1].cell(0, 0));
            if x.atom == y.atom {
                shared += 1;
                assert_eq!(x.value.to_bits(), y.value.to_bits());
            }
        }
        assert!(shared > 0);
    }

    #[test]
    fn prior_seating_round_trips_counts() {
        let mut store = AtomStore::franchise(params(), 2);
        let mut r = rng::stream(4, 0);
        let cells: Vec<_> = (0..30).map(|i| (i % 2, store.seat_from_prior(i % 2, &mut r))).collect();
        for (t, c) in cells.iter().rev() {
            store.unseat(*t, c);
        }
        match &store {
            AtomStore::Franchise(f) => {
                assert!(f.dishes.is_empty());
                assert_eq!(f.total_tables(), 0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn sampling_log_weights_respects_infinities() {
        let mut r = rng::stream(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_log_weights(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY], &mut r), 1);
        }
    }
}
