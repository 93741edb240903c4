//! Cycle-consistent unpaired translation between the noisy and clean map
//! corpora: a generator pair (G noisy->clean, G' clean->noisy) and two patch
//! discriminators trained with the least-squares adversarial loss plus an
//! L1 cycle term. The noisy->clean direction is the style network S used as
//! a frozen target during agent adaptation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, Graph, NodeId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::maptrans::dataset::MapDataset;
use crate::perception::mapping::{add_conv, conv, Conv};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleTrainConfig {
    /// Weight of the L1 cycle term; adversarial weight is fixed at 1.
    pub lambda_cyc: f32,
    pub iterations: usize,
    pub batch: usize,
    pub lr: f32,
    /// Size of the past-fake image buffer fed to discriminator updates.
    pub buffer: usize,
    /// Minimum corpus size on each side.
    pub min_items: usize,
}

impl Default for CycleTrainConfig {
    fn default() -> Self {
        CycleTrainConfig {
            lambda_cyc: 10.0,
            iterations: 5000,
            batch: 4,
            lr: 2e-4,
            buffer: 50,
            min_items: 200,
        }
    }
}

impl CycleTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_cyc <= 0.0 || self.batch == 0 || self.lr <= 0.0 {
            return Err(Error::ConfigInvalid(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Layer handles for one generator: 3 downsampling blocks, 2 residual
/// blocks, 3 upsampling blocks, tanh rescaled to [0,1].
#[derive(Debug, Clone)]
struct GenLayers {
    down: [(Conv, (usize, usize)); 3],
    res: [((Conv, (usize, usize)), (Conv, (usize, usize))); 2],
    up: [Conv; 3],
    up_norm: [(usize, usize); 2],
}

const GC: [usize; 4] = [1, 8, 16, 32];

fn add_generator(ps: &mut ParamSet, prefix: &str, rng: &mut impl Rng) -> GenLayers {
    let mut down = Vec::new();
    for i in 0..3 {
        let c = add_conv(ps, &format!("{prefix}.d{i}"), GC[i + 1], GC[i], 3, 2, rng);
        let n = ps.add_norm(&format!("{prefix}.dn{i}"), GC[i + 1]);
        down.push((c, n));
    }
    let mut res = Vec::new();
    for i in 0..2 {
        let c1 = add_conv(ps, &format!("{prefix}.r{i}a"), GC[3], GC[3], 3, 1, rng);
        let n1 = ps.add_norm(&format!("{prefix}.r{i}an"), GC[3]);
        let c2 = add_conv(ps, &format!("{prefix}.r{i}b"), GC[3], GC[3], 3, 1, rng);
        let n2 = ps.add_norm(&format!("{prefix}.r{i}bn"), GC[3]);
        res.push(((c1, n1), (c2, n2)));
    }
    let up = [
        add_conv(ps, &format!("{prefix}.u0"), GC[2], GC[3], 3, 1, rng),
        add_conv(ps, &format!("{prefix}.u1"), GC[1], GC[2], 3, 1, rng),
        add_conv(ps, &format!("{prefix}.u2"), GC[0], GC[1], 3, 1, rng),
    ];
    let up_norm = [
        ps.add_norm(&format!("{prefix}.un0"), GC[2]),
        ps.add_norm(&format!("{prefix}.un1"), GC[1]),
    ];
    GenLayers {
        down: down.try_into().unwrap(),
        res: res.try_into().unwrap(),
        up,
        up_norm,
    }
}

fn norm(g: &mut Graph, ps: &ParamSet, n: (usize, usize), x: NodeId) -> Result<NodeId> {
    let gain = g.param(ps, n.0);
    let bias = g.param(ps, n.1);
    g.instance_norm(x, gain, bias)
}

fn gen_forward(g: &mut Graph, ps: &ParamSet, net: &GenLayers, x: NodeId) -> Result<NodeId> {
    let mut h = x;
    for (c, n) in net.down {
        h = conv(g, ps, c, h)?;
        h = norm(g, ps, n, h)?;
        h = g.relu(h)?;
    }
    for ((c1, n1), (c2, n2)) in net.res {
        let skip = h;
        let mut r = conv(g, ps, c1, h)?;
        r = norm(g, ps, n1, r)?;
        r = g.relu(r)?;
        r = conv(g, ps, c2, r)?;
        r = norm(g, ps, n2, r)?;
        h = g.add(skip, r)?;
    }
    for (i, c) in net.up.into_iter().enumerate() {
        h = g.upsample_nearest2(h)?;
        h = conv(g, ps, c, h)?;
        if i < 2 {
            h = norm(g, ps, net.up_norm[i], h)?;
            h = g.relu(h)?;
        }
    }
    let t = g.tanh(h)?;
    let half = g.scale(t, 0.5)?;
    g.offset(half, 0.5)
}

/// 3 strided conv blocks plus a 1-channel head: a patch discriminator.
#[derive(Debug, Clone)]
struct DiscLayers {
    layers: [Conv; 3],
    head: Conv,
}

fn add_discriminator(ps: &mut ParamSet, prefix: &str, rng: &mut impl Rng) -> DiscLayers {
    DiscLayers {
        layers: [
            add_conv(ps, &format!("{prefix}.c0"), 8, 1, 3, 2, rng),
            add_conv(ps, &format!("{prefix}.c1"), 16, 8, 3, 2, rng),
            add_conv(ps, &format!("{prefix}.c2"), 32, 16, 3, 2, rng),
        ],
        head: add_conv(ps, &format!("{prefix}.h"), 1, 32, 3, 1, rng),
    }
}

fn disc_forward(g: &mut Graph, ps: &ParamSet, net: &DiscLayers, x: NodeId) -> Result<NodeId> {
    let mut h = x;
    for c in net.layers {
        h = conv(g, ps, c, h)?;
        h = g.leaky_relu(h, 0.2)?;
    }
    conv(g, ps, net.head, h)
}

/// Least-squares adversarial objective against a constant target.
fn lsgan(g: &mut Graph, logits: NodeId, target: f32) -> Result<NodeId> {
    let t = g.leaf(Tensor::from_vec(
        g.shape(logits),
        vec![target; g.shape(logits).iter().product()],
    ));
    g.mse_loss(logits, t)
}

/// L1 cycle term between a reconstruction and its original.
pub(crate) fn cycle_term(g: &mut Graph, recon: NodeId, orig: NodeId) -> Result<NodeId> {
    g.l1_loss(recon, orig)
}

#[derive(Debug, Clone)]
pub struct TranslationNet {
    pub params: ParamSet,
    g: GenLayers,
    g_rev: GenLayers,
    d_clean: DiscLayers,
    d_noisy: DiscLayers,
    shape: [usize; 4],
}

impl TranslationNet {
    pub fn new(shape: [usize; 4], rng: &mut impl Rng) -> Self {
        let mut ps = ParamSet::new();
        let g = add_generator(&mut ps, "s.g", rng);
        let g_rev = add_generator(&mut ps, "s.grev", rng);
        let d_clean = add_discriminator(&mut ps, "s.dc", rng);
        let d_noisy = add_discriminator(&mut ps, "s.dn", rng);
        TranslationNet {
            params: ps,
            g,
            g_rev,
            d_clean,
            d_noisy,
            shape,
        }
    }

    pub fn item_shape(&self) -> [usize; 4] {
        self.shape
    }

    /// S(m): one deterministic noisy->clean forward pass.
    pub fn apply(&self, m: &Tensor) -> Result<Tensor> {
        if m.shape != self.shape {
            return Err(Error::ShapeMismatch(format!(
                "style input {:?}, trained on {:?}",
                m.shape, self.shape
            )));
        }
        let mut g = Graph::new();
        let x = g.leaf(m.clone());
        let y = gen_forward(&mut g, &self.params, &self.g, x)?;
        Ok(g.value(y).clone())
    }

    /// Reverse direction G' (clean->noisy), used in diagnostics.
    pub fn apply_reverse(&self, m: &Tensor) -> Result<Tensor> {
        if m.shape != self.shape {
            return Err(Error::ShapeMismatch("style input".into()));
        }
        let mut g = Graph::new();
        let x = g.leaf(m.clone());
        let y = gen_forward(&mut g, &self.params, &self.g_rev, x)?;
        Ok(g.value(y).clone())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::autodiff::save_checkpoint(&self.params, path)
    }

    pub fn load(shape: [usize; 4], path: &std::path::Path) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = TranslationNet::new(shape, &mut rng);
        crate::autodiff::load_checkpoint(&mut net.params, path)?;
        Ok(net)
    }
}

fn keep_prefixes(
    ps: &ParamSet,
    grads: std::collections::HashMap<usize, Tensor>,
    prefixes: &[&str],
) -> std::collections::HashMap<usize, Tensor> {
    grads
        .into_iter()
        .filter(|(i, _)| {
            let name = &ps.params[*i].name;
            prefixes.iter().any(|p| name.starts_with(p))
        })
        .collect()
}

fn accumulate(
    into: &mut std::collections::HashMap<usize, Tensor>,
    from: std::collections::HashMap<usize, Tensor>,
) {
    for (k, v) in from {
        match into.get_mut(&k) {
            Some(t) => t.add_assign(&v),
            None => {
                into.insert(k, v);
            }
        }
    }
}

fn scale_grads(grads: &mut std::collections::HashMap<usize, Tensor>, k: f32) {
    for t in grads.values_mut() {
        *t = t.map(|v| v * k);
    }
}

/// Rolling discriminator-collapse detector: trips when accuracy stays
/// pinned at chance while the generator output is frozen.
struct CollapseMonitor {
    window: usize,
    accs: std::collections::VecDeque<f64>,
    probe_hashes: std::collections::VecDeque<u64>,
}

impl CollapseMonitor {
    fn new(window: usize) -> Self {
        CollapseMonitor {
            window,
            accs: Default::default(),
            probe_hashes: Default::default(),
        }
    }

    fn push(&mut self, acc: f64, probe_hash: u64) -> bool {
        self.accs.push_back(acc);
        self.probe_hashes.push_back(probe_hash);
        if self.accs.len() > self.window {
            self.accs.pop_front();
            self.probe_hashes.pop_front();
        }
        self.accs.len() == self.window
            && self.accs.iter().all(|&a| (a - 0.5).abs() <= 0.02)
            && self.probe_hashes.iter().all(|&h| h == self.probe_hashes[0])
    }
}

fn tensor_hash(t: &Tensor) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for &v in &t.data {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Per-iteration scalar diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct CycleTrainStats {
    pub loss_g: f64,
    pub loss_d: f64,
    pub disc_accuracy: f64,
}

/// Train S on unpaired corpora and return the noisy->clean direction (the
/// full net, whose `apply` is that direction). Deterministic for a fixed
/// seed and corpus order.
pub fn train_style(
    clean: &MapDataset,
    noisy: &MapDataset,
    cfg: &CycleTrainConfig,
    seed: u64,
) -> Result<(TranslationNet, Vec<CycleTrainStats>)> {
    cfg.validate()?;
    if clean.len() < cfg.min_items || noisy.len() < cfg.min_items {
        return Err(Error::EmptyCorpus(format!(
            "need {} items per corpus, got clean {} noisy {}",
            cfg.min_items,
            clean.len(),
            noisy.len()
        )));
    }
    let shape = clean.item_shape().unwrap();
    if noisy.item_shape() != Some(shape) {
        return Err(Error::ShapeMismatch("corpus shape mismatch".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = TranslationNet::new(shape, &mut rng);
    let mut opt_g = Adam::with_lr(cfg.lr);
    let mut opt_d = Adam::with_lr(cfg.lr);
    let mut fake_clean_buf: Vec<Tensor> = Vec::new();
    let mut fake_noisy_buf: Vec<Tensor> = Vec::new();
    let mut monitor = CollapseMonitor::new(1000);
    let probe = noisy.items[0].image.clone();
    let mut stats = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        // ---- generator update ----
        let mut g_grads = std::collections::HashMap::new();
        let mut loss_g_total = 0.0f64;
        let mut fakes_c = Vec::new();
        let mut fakes_n = Vec::new();
        for _ in 0..cfg.batch {
            let x = &noisy.items[rng.gen_range(0..noisy.len())].image;
            let y = &clean.items[rng.gen_range(0..clean.len())].image;
            let mut g = Graph::new();
            let xn = g.leaf(x.clone());
            let yn = g.leaf(y.clone());
            let fake_c = gen_forward(&mut g, &net.params, &net.g, xn)?;
            let fake_n = gen_forward(&mut g, &net.params, &net.g_rev, yn)?;
            let adv_c = {
                let l = disc_forward(&mut g, &net.params, &net.d_clean, fake_c)?;
                lsgan(&mut g, l, 1.0)?
            };
            let adv_n = {
                let l = disc_forward(&mut g, &net.params, &net.d_noisy, fake_n)?;
                lsgan(&mut g, l, 1.0)?
            };
            let rec_x = gen_forward(&mut g, &net.params, &net.g_rev, fake_c)?;
            let rec_y = gen_forward(&mut g, &net.params, &net.g, fake_n)?;
            let cyc_x = cycle_term(&mut g, rec_x, xn)?;
            let cyc_y = cycle_term(&mut g, rec_y, yn)?;
            let adv = g.add(adv_c, adv_n)?;
            let cyc = g.add(cyc_x, cyc_y)?;
            let cyc_w = g.scale(cyc, cfg.lambda_cyc)?;
            let loss = g.add(adv, cyc_w)?;
            let lv = g.value_f64(loss);
            if !lv.is_finite() {
                return Err(Error::Diverged(format!("generator loss at iter {iter}")));
            }
            loss_g_total += lv;
            fakes_c.push(g.value(fake_c).clone());
            fakes_n.push(g.value(fake_n).clone());
            let grads = g.backward(loss)?;
            accumulate(&mut g_grads, grads.param_grads());
        }
        let mut g_grads = keep_prefixes(&net.params, g_grads, &["s.g"]);
        scale_grads(&mut g_grads, 1.0 / cfg.batch as f32);
        opt_g.step(&mut net.params, &g_grads)?;

        // ---- discriminator update with the past-fake buffer ----
        let mut d_grads = std::collections::HashMap::new();
        let mut loss_d_total = 0.0f64;
        let mut correct = 0usize;
        let mut judged = 0usize;
        for k in 0..cfg.batch {
            push_buffer(&mut fake_clean_buf, fakes_c[k].clone(), cfg.buffer, &mut rng);
            push_buffer(&mut fake_noisy_buf, fakes_n[k].clone(), cfg.buffer, &mut rng);
            let fc = &fake_clean_buf[rng.gen_range(0..fake_clean_buf.len())];
            let fnn = &fake_noisy_buf[rng.gen_range(0..fake_noisy_buf.len())];
            let real_c = &clean.items[rng.gen_range(0..clean.len())].image;
            let real_n = &noisy.items[rng.gen_range(0..noisy.len())].image;
            let mut g = Graph::new();
            let part = |g: &mut Graph,
                            net: &TranslationNet,
                            d: &DiscLayers,
                            real: &Tensor,
                            fake: &Tensor|
             -> Result<(NodeId, f64, usize)> {
                let r = g.leaf(real.clone());
                let f = g.leaf(fake.clone());
                let lr_ = disc_forward(g, &net.params, d, r)?;
                let lf = disc_forward(g, &net.params, d, f)?;
                let mean_r = g.value(lr_).data.iter().sum::<f32>() / g.value(lr_).numel() as f32;
                let mean_f = g.value(lf).data.iter().sum::<f32>() / g.value(lf).numel() as f32;
                let hits = (mean_r > 0.5) as usize + (mean_f < 0.5) as usize;
                let a = lsgan(g, lr_, 1.0)?;
                let b = lsgan(g, lf, 0.0)?;
                let s = g.add(a, b)?;
                let half = g.scale(s, 0.5)?;
                Ok((half, g.value_f64(half), hits))
            };
            let (lc, lcv, hc) = part(&mut g, &net, &net.d_clean, real_c, fc)?;
            let (ln, lnv, hn) = part(&mut g, &net, &net.d_noisy, real_n, fnn)?;
            if !lcv.is_finite() || !lnv.is_finite() {
                return Err(Error::Diverged(format!("discriminator loss at iter {iter}")));
            }
            loss_d_total += lcv + lnv;
            correct += hc + hn;
            judged += 4;
            let loss = g.add(lc, ln)?;
            let grads = g.backward(loss)?;
            accumulate(&mut d_grads, grads.param_grads());
        }
        let mut d_grads = keep_prefixes(&net.params, d_grads, &["s.dc", "s.dn"]);
        scale_grads(&mut d_grads, 1.0 / cfg.batch as f32);
        opt_d.step(&mut net.params, &d_grads)?;

        let acc = correct as f64 / judged as f64;
        let probe_hash = if iter % 100 == 0 {
            tensor_hash(&net.apply(&probe)?)
        } else {
            *monitor.probe_hashes.back().unwrap_or(&0)
        };
        if monitor.push(acc, probe_hash) {
            return Err(Error::Collapsed(format!(
                "discriminator pinned at chance with a static generator since iter {}",
                iter.saturating_sub(1000)
            )));
        }
        stats.push(CycleTrainStats {
            loss_g: loss_g_total / cfg.batch as f64,
            loss_d: loss_d_total / cfg.batch as f64,
            disc_accuracy: acc,
        });
    }
    Ok((net, stats))
}

fn push_buffer(buf: &mut Vec<Tensor>, fake: Tensor, cap: usize, rng: &mut impl Rng) {
    if buf.len() < cap {
        buf.push(fake);
    } else {
        // half the time overwrite a stored fake, half the time drop the new
        // one: discriminators keep seeing a mix of fresh and stale samples
        if rng.gen_bool(0.5) {
            let i = rng.gen_range(0..buf.len());
            buf[i] = fake;
        }
    }
}

/// Mean MSE of S(noisy) against matched clean references on a probe set
/// whose pairing is known to the harness only, never to training.
pub fn paired_probe_mse(
    net: &TranslationNet,
    noisy: &[Tensor],
    clean: &[Tensor],
) -> Result<(f64, f64)> {
    if noisy.len() != clean.len() || noisy.is_empty() {
        return Err(Error::LengthMismatch(noisy.len(), clean.len()));
    }
    let mut before = 0.0;
    let mut after = 0.0;
    for (x, y) in noisy.iter().zip(clean) {
        let sx = net.apply(x)?;
        before += mse(x, y);
        after += mse(&sx, y);
    }
    let n = noisy.len() as f64;
    Ok((before / n, after / n))
}

fn mse(a: &Tensor, b: &Tensor) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.numel() as f64
}
