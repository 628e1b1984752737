//! Rule-based segmentation: compartment split, threshold classification,
//! bone thickness enforcement, and the composed pipeline.
//!
//! Inputs are preprocessed volumes (normalized to [0.01, 0.99] with air at
//! exactly 0), so every threshold lives in normalized intensity space.

use crate::phantom::TissueIntensityTable;
use crate::vol::{
    connected_components, distance_transform, ellipsoid_mask, fill_holes, Connectivity, Grid,
    IntensityVolume, LabelVolume, Mask, Tissue, VolumeError,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RulesegError {
    #[error("compartment split failed at stage {stage}: {reason} (dark voxels: {dark_voxels}, enclosed components: {enclosed})")]
    SplitFailed {
        stage: &'static str,
        reason: String,
        dark_voxels: usize,
        enclosed: usize,
    },
    #[error("brain label at voxel {0} lies outside the inner compartment")]
    BrainOutsideInner(usize),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<RulesegError>,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Normalized-intensity map used when deriving thresholds from a tissue
/// table: the same affine that normalization applies to a noise-free
/// volume whose extrema are the table extrema.
fn norm(v: f32, lo: f32, hi: f32) -> f32 {
    0.01 + 0.98 * (v - lo) / (hi - lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    /// Below this T2 a head voxel belongs to the dark (bone) shell.
    pub t2_shell_max: f32,
    /// Within bone, above this T2 is cancellous, below cortical.
    pub t2_bone_split: f32,
    /// Inner non-brain voxels below this T2 are blood.
    pub t2_blood_dark: f32,
    /// Above this T2 is CSF (inner) or vitreous humor (outer).
    pub t2_csf_bright: f32,
    /// Nasal-region voxels above this T2 are mucous, otherwise cortical.
    pub t2_mucous_bright: f32,
    /// Inner voxels at or above this T1 are brain.
    pub t1_gm_min: f32,
    /// Brain voxels at or above this T1 are white matter.
    pub t1_wm_min: f32,
    /// Deep-scalp voxels above this T1 are fat.
    pub t1_fat_min: f32,
    /// Deep-scalp voxels above this T1 (and not fat) are muscle; below
    /// falls back to skin.
    pub t1_muscle_min: f32,
    pub cortical_inner_min_mm: f64,
    pub cortical_outer_min_mm: f64,
    pub scalp_min_mm: f64,
    pub scalp_max_mm: f64,
    pub skin_depth_mm: f64,
    pub dura_depth_mm: f64,
    /// Cerebellum prior region relative to the inner-compartment center.
    pub cerebellum_offset_mm: [f64; 3],
    pub cerebellum_semi_mm: [f64; 3],
    /// Nasal cavity prior region relative to the inner-compartment center.
    pub nasal_offset_mm: [f64; 3],
    pub nasal_semi_mm: [f64; 3],
    /// Smallest bright-T2 outer component treated as an eye globe.
    pub min_eye_voxels: usize,
    /// CSF components outside the skull smaller than this are relabelled
    /// by the cleanup pass.
    pub cleanup_min_voxels: usize,
    /// Head mask: any modality strictly above this (air is exactly 0).
    pub head_threshold: f32,
}

impl RuleConfig {
    /// Derive thresholds from a tissue intensity table: each threshold is
    /// the midpoint between the classes it separates, mapped into the
    /// normalized intensity range.
    pub fn from_table(table: &TissueIntensityTable) -> RuleConfig {
        use Tissue::*;
        let t1_range = {
            let vals: Vec<f32> = Tissue::TISSUES.iter().map(|&t| table.t1_of(t)).collect();
            (
                vals.iter().cloned().fold(f32::INFINITY, f32::min),
                vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max),
            )
        };
        let (t1_lo, t1_hi) = t1_range;
        let t2_vals: Vec<f32> = Tissue::TISSUES.iter().map(|&t| table.t2_of(t)).collect();
        let (t2_lo, t2_hi) = (
            t2_vals.iter().cloned().fold(f32::INFINITY, f32::min),
            t2_vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max),
        );
        let n1 = |t: Tissue| norm(table.t1_of(t), t1_lo, t1_hi);
        let n2 = |t: Tissue| norm(table.t2_of(t), t2_lo, t2_hi);
        let mid = |a: f32, b: f32| 0.5 * (a + b);

        // Shell: bone above, everything else in the head except blood.
        let bone_hi = n2(SkullCancellous).max(n2(SkullCortical));
        let non_shell_lo = [
            Skin, Fat, Muscle, BrainWm, BrainGm, CerebellumWm, CerebellumGm, Csf, Dura,
            VitreousHumor, Lens, Mucous,
        ]
        .iter()
        .map(|&t| n2(t))
        .fold(f32::INFINITY, f32::min);

        RuleConfig {
            t2_shell_max: mid(bone_hi, non_shell_lo),
            t2_bone_split: mid(n2(SkullCortical), n2(SkullCancellous)),
            t2_blood_dark: mid(n2(Blood), n2(Dura)),
            t2_csf_bright: mid(
                n2(Csf).min(n2(VitreousHumor)),
                n2(Dura).max(n2(Skin)).max(n2(Fat)).max(n2(Muscle)).max(n2(Lens)),
            ),
            t2_mucous_bright: mid(n2(Mucous), bone_hi),
            t1_gm_min: mid(n1(Dura).max(n1(Blood)), n1(BrainGm).min(n1(CerebellumGm))),
            t1_wm_min: mid(n1(BrainGm), n1(BrainWm)),
            t1_fat_min: mid(n1(Fat), n1(Skin).max(n1(Muscle))),
            t1_muscle_min: mid(n1(Muscle), n1(Dura)),
            cortical_inner_min_mm: 1.0,
            cortical_outer_min_mm: 1.5,
            scalp_min_mm: 2.0,
            scalp_max_mm: 10.0,
            skin_depth_mm: 2.0,
            dura_depth_mm: 2.0,
            cerebellum_offset_mm: crate::phantom::CEREBELLUM_OFFSET_MM,
            cerebellum_semi_mm: [
                crate::phantom::CEREBELLUM_SEMI_MM[0] + crate::phantom::CEREBELLUM_PRIOR_MARGIN_MM,
                crate::phantom::CEREBELLUM_SEMI_MM[1] + crate::phantom::CEREBELLUM_PRIOR_MARGIN_MM,
                crate::phantom::CEREBELLUM_SEMI_MM[2] + crate::phantom::CEREBELLUM_PRIOR_MARGIN_MM,
            ],
            nasal_offset_mm: crate::phantom::NASAL_OFFSET_MM,
            nasal_semi_mm: crate::phantom::NASAL_SEMI_MM,
            min_eye_voxels: 10,
            cleanup_min_voxels: 500,
            head_threshold: 0.005,
        }
    }

    /// Flat key = value text form; every field round-trips.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("t2_shell_max", self.t2_shell_max.to_string());
        kv("t2_bone_split", self.t2_bone_split.to_string());
        kv("t2_blood_dark", self.t2_blood_dark.to_string());
        kv("t2_csf_bright", self.t2_csf_bright.to_string());
        kv("t2_mucous_bright", self.t2_mucous_bright.to_string());
        kv("t1_gm_min", self.t1_gm_min.to_string());
        kv("t1_wm_min", self.t1_wm_min.to_string());
        kv("t1_fat_min", self.t1_fat_min.to_string());
        kv("t1_muscle_min", self.t1_muscle_min.to_string());
        kv("cortical_inner_min_mm", self.cortical_inner_min_mm.to_string());
        kv("cortical_outer_min_mm", self.cortical_outer_min_mm.to_string());
        kv("scalp_min_mm", self.scalp_min_mm.to_string());
        kv("scalp_max_mm", self.scalp_max_mm.to_string());
        kv("skin_depth_mm", self.skin_depth_mm.to_string());
        kv("dura_depth_mm", self.dura_depth_mm.to_string());
        let vec3 = |v: [f64; 3]| format!("{} {} {}", v[0], v[1], v[2]);
        kv("cerebellum_offset_mm", vec3(self.cerebellum_offset_mm));
        kv("cerebellum_semi_mm", vec3(self.cerebellum_semi_mm));
        kv("nasal_offset_mm", vec3(self.nasal_offset_mm));
        kv("nasal_semi_mm", vec3(self.nasal_semi_mm));
        kv("min_eye_voxels", self.min_eye_voxels.to_string());
        kv("cleanup_min_voxels", self.cleanup_min_voxels.to_string());
        kv("head_threshold", self.head_threshold.to_string());
        s
    }

    /// Parse the key = value form, starting from defaults so partial
    /// files are overrides.
    pub fn parse_text(text: &str) -> Result<RuleConfig, String> {
        let mut cfg = RuleConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let f32v = || -> Result<f32, String> {
                value.parse().map_err(|_| format!("line {}: bad number {value:?}", lineno + 1))
            };
            let f64v = || -> Result<f64, String> {
                value.parse().map_err(|_| format!("line {}: bad number {value:?}", lineno + 1))
            };
            let usizev = || -> Result<usize, String> {
                value.parse().map_err(|_| format!("line {}: bad count {value:?}", lineno + 1))
            };
            let vec3v = || -> Result<[f64; 3], String> {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(format!("line {}: expected 3 numbers", lineno + 1));
                }
                let mut out = [0.0; 3];
                for (i, p) in parts.iter().enumerate() {
                    out[i] = p
                        .parse()
                        .map_err(|_| format!("line {}: bad number {p:?}", lineno + 1))?;
                }
                Ok(out)
            };
            match key {
                "t2_shell_max" => cfg.t2_shell_max = f32v()?,
                "t2_bone_split" => cfg.t2_bone_split = f32v()?,
                "t2_blood_dark" => cfg.t2_blood_dark = f32v()?,
                "t2_csf_bright" => cfg.t2_csf_bright = f32v()?,
                "t2_mucous_bright" => cfg.t2_mucous_bright = f32v()?,
                "t1_gm_min" => cfg.t1_gm_min = f32v()?,
                "t1_wm_min" => cfg.t1_wm_min = f32v()?,
                "t1_fat_min" => cfg.t1_fat_min = f32v()?,
                "t1_muscle_min" => cfg.t1_muscle_min = f32v()?,
                "cortical_inner_min_mm" => cfg.cortical_inner_min_mm = f64v()?,
                "cortical_outer_min_mm" => cfg.cortical_outer_min_mm = f64v()?,
                "scalp_min_mm" => cfg.scalp_min_mm = f64v()?,
                "scalp_max_mm" => cfg.scalp_max_mm = f64v()?,
                "skin_depth_mm" => cfg.skin_depth_mm = f64v()?,
                "dura_depth_mm" => cfg.dura_depth_mm = f64v()?,
                "cerebellum_offset_mm" => cfg.cerebellum_offset_mm = vec3v()?,
                "cerebellum_semi_mm" => cfg.cerebellum_semi_mm = vec3v()?,
                "nasal_offset_mm" => cfg.nasal_offset_mm = vec3v()?,
                "nasal_semi_mm" => cfg.nasal_semi_mm = vec3v()?,
                "min_eye_voxels" => cfg.min_eye_voxels = usizev()?,
                "cleanup_min_voxels" => cfg.cleanup_min_voxels = usizev()?,
                "head_threshold" => cfg.head_threshold = f32v()?,
                other => return Err(format!("line {}: unknown key {other:?}", lineno + 1)),
            }
        }
        Ok(cfg)
    }
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig::from_table(&TissueIntensityTable::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Compartment {
    Air = 0,
    Outer = 1,
    Middle = 2,
    Inner = 3,
}

/// Per-voxel compartment assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CompartmentMap {
    grid: Grid,
    tags: Vec<u8>,
}

impl CompartmentMap {
    pub fn new(grid: Grid, tags: Vec<u8>) -> CompartmentMap {
        assert_eq!(tags.len(), grid.len());
        CompartmentMap { grid, tags }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn at(&self, i: usize) -> Compartment {
        match self.tags[i] {
            1 => Compartment::Outer,
            2 => Compartment::Middle,
            3 => Compartment::Inner,
            _ => Compartment::Air,
        }
    }

    pub fn mask_of(&self, c: Compartment) -> Mask {
        Mask::new(self.grid, self.tags.iter().map(|&t| t == c as u8).collect())
            .expect("grid matches")
    }

    /// Center of the inner compartment's bounding box, in mm.
    pub fn inner_center_mm(&self) -> [f64; 3] {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for i in 0..self.grid.len() {
            if self.tags[i] == Compartment::Inner as u8 {
                let v = self.grid.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(v[a]);
                    hi[a] = hi[a].max(v[a]);
                }
            }
        }
        [
            (lo[0] + hi[0] + 1) as f64 / 2.0 * self.grid.spacing[0],
            (lo[1] + hi[1] + 1) as f64 / 2.0 * self.grid.spacing[1],
            (lo[2] + hi[2] + 1) as f64 / 2.0 * self.grid.spacing[2],
        ]
    }
}

/// Head mask for preprocessed inputs: any modality above the air level.
pub fn head_mask_from_normalized(
    t1: &IntensityVolume,
    t2: &IntensityVolume,
    threshold: f32,
) -> Result<Mask, VolumeError> {
    let a = Mask::new(t1.grid(), t1.data().iter().map(|&v| v > threshold).collect())?;
    let b = Mask::new(t2.grid(), t2.data().iter().map(|&v| v > threshold).collect())?;
    a.union(&b)
}

/// Split the head into outer/middle/inner compartments from the dark-T2
/// bone shell. The largest dark component is the skull; cavities of its
/// complement are the inner compartment (largest) and nasal pockets
/// (smaller, assigned to the middle compartment).
pub fn split_compartments(
    t2: &IntensityVolume,
    head: &Mask,
    cfg: &RuleConfig,
) -> Result<CompartmentMap, RulesegError> {
    let grid = t2.grid();
    let dark = Mask::new(
        grid,
        t2.data()
            .iter()
            .zip(head.data())
            .map(|(&v, &h)| h && v < cfg.t2_shell_max)
            .collect(),
    )?;
    let dark_voxels = dark.count();
    let (dark_ids, dark_sizes) = connected_components(&dark, Connectivity::Six);
    let Some(shell_id) = dark_sizes
        .iter()
        .enumerate()
        .max_by_key(|(_, &s)| s)
        .map(|(i, _)| i as u32 + 1)
    else {
        return Err(RulesegError::SplitFailed {
            stage: "shell",
            reason: "no dark shell voxels below the T2 threshold".into(),
            dark_voxels,
            enclosed: 0,
        });
    };
    let shell = Mask::new(grid, dark_ids.iter().map(|&id| id == shell_id).collect())?;

    // Components of the non-shell space; those not reaching the grid
    // boundary are enclosed by the shell.
    let (ids, sizes) = connected_components(&shell.complement(), Connectivity::Six);
    let mut touches_boundary = vec![false; sizes.len() + 1];
    let [nx, ny, nz] = grid.dims;
    for i in 0..grid.len() {
        let [x, y, z] = grid.coords(i);
        if x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1 {
            touches_boundary[ids[i] as usize] = true;
        }
    }
    let enclosed: Vec<u32> = (1..=sizes.len() as u32)
        .filter(|&id| !touches_boundary[id as usize])
        .collect();
    if enclosed.is_empty() {
        return Err(RulesegError::SplitFailed {
            stage: "cavity",
            reason: "dark shell does not enclose a cavity".into(),
            dark_voxels,
            enclosed: 0,
        });
    }
    let inner_id = *enclosed
        .iter()
        .max_by_key(|&&id| sizes[id as usize - 1])
        .expect("non-empty");
    let nasal_ids: std::collections::HashSet<u32> =
        enclosed.iter().copied().filter(|&id| id != inner_id).collect();

    let mut tags = vec![Compartment::Air as u8; grid.len()];
    for i in 0..grid.len() {
        if shell.data()[i] || nasal_ids.contains(&ids[i]) {
            tags[i] = Compartment::Middle as u8;
        } else if ids[i] == inner_id {
            tags[i] = Compartment::Inner as u8;
        } else if head.data()[i] {
            tags[i] = Compartment::Outer as u8;
        }
    }
    let cm = CompartmentMap::new(grid, tags);
    for c in [Compartment::Outer, Compartment::Middle, Compartment::Inner] {
        if !cm.mask_of(c).any() {
            return Err(RulesegError::SplitFailed {
                stage: "compartments",
                reason: format!("{c:?} compartment is empty"),
                dark_voxels,
                enclosed: enclosed.len(),
            });
        }
    }
    Ok(cm)
}

/// T1-band brain classifier over the inner compartment. Returns a label
/// per voxel: GM/WM (cerebral or cerebellar by the prior region) for the
/// brain bands, ventricular CSF for enclosed non-brain pockets, None for
/// everything else. Deep bright structures inside the brain fall into the
/// GM band by construction.
pub fn brain_split(
    t1: &IntensityVolume,
    cm: &CompartmentMap,
    cfg: &RuleConfig,
) -> (Vec<Option<Tissue>>, Vec<String>) {
    let grid = t1.grid();
    let inner = cm.mask_of(Compartment::Inner);
    let center = cm.inner_center_mm();
    let cb_prior = ellipsoid_mask(
        grid,
        [
            center[0] + cfg.cerebellum_offset_mm[0],
            center[1] + cfg.cerebellum_offset_mm[1],
            center[2] + cfg.cerebellum_offset_mm[2],
        ],
        cfg.cerebellum_semi_mm,
    );
    let mut out = vec![None; grid.len()];
    for i in 0..grid.len() {
        if !inner.data()[i] {
            continue;
        }
        let v = t1.data()[i];
        if v >= cfg.t1_gm_min {
            let wm = v >= cfg.t1_wm_min;
            out[i] = Some(match (cb_prior.data()[i], wm) {
                (true, true) => Tissue::CerebellumWm,
                (true, false) => Tissue::CerebellumGm,
                (false, true) => Tissue::BrainWm,
                (false, false) => Tissue::BrainGm,
            });
        }
    }
    // Ventricles: non-brain pockets fully enclosed by brain (no contact
    // with the middle compartment).
    let non_brain = Mask::new(
        grid,
        (0..grid.len())
            .map(|i| inner.data()[i] && out[i].is_none())
            .collect(),
    )
    .expect("grid matches");
    let (ids, sizes) = connected_components(&non_brain, Connectivity::Six);
    let mut touches_middle = vec![false; sizes.len() + 1];
    for i in 0..grid.len() {
        if ids[i] == 0 {
            continue;
        }
        let [x, y, z] = grid.coords(i);
        for off in Connectivity::Six.offsets() {
            let p = [x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]];
            if grid.contains(p) {
                let j = grid.index(p[0] as usize, p[1] as usize, p[2] as usize);
                if cm.at(j) == Compartment::Middle {
                    touches_middle[ids[i] as usize] = true;
                    break;
                }
            }
        }
    }
    for i in 0..grid.len() {
        if ids[i] != 0 && !touches_middle[ids[i] as usize] {
            out[i] = Some(Tissue::Csf);
        }
    }

    let mut warnings = Vec::new();
    for t in [
        Tissue::BrainWm,
        Tissue::BrainGm,
        Tissue::CerebellumWm,
        Tissue::CerebellumGm,
    ] {
        if !out.iter().any(|&l| l == Some(t)) {
            warnings.push(format!("brain class {} is empty", t.name()));
        }
    }
    (out, warnings)
}

/// Classify inner non-brain voxels: bright T2 is CSF, dark T2 is blood,
/// mid T2 close to the skull is dura, remaining mid T2 is CSF.
pub fn segment_inner(
    t2: &IntensityVolume,
    cm: &CompartmentMap,
    brain: &[Option<Tissue>],
    cfg: &RuleConfig,
) -> Result<Vec<Option<Tissue>>, RulesegError> {
    let grid = t2.grid();
    for (i, l) in brain.iter().enumerate() {
        if l.is_some() && cm.at(i) != Compartment::Inner {
            return Err(RulesegError::BrainOutsideInner(i));
        }
    }
    let d_mid = distance_transform(&cm.mask_of(Compartment::Middle));
    let mut out = vec![None; grid.len()];
    for i in 0..grid.len() {
        if cm.at(i) != Compartment::Inner {
            continue;
        }
        out[i] = Some(if let Some(b) = brain[i] {
            b
        } else {
            let v = t2.data()[i];
            if v > cfg.t2_csf_bright {
                Tissue::Csf
            } else if v < cfg.t2_blood_dark {
                Tissue::Blood
            } else if d_mid[i] <= cfg.dura_depth_mm {
                Tissue::Dura
            } else {
                Tissue::Csf
            }
        });
    }
    Ok(out)
}

/// Classify the middle compartment: mucous or cortical inside the nasal
/// region, cortical/cancellous by T2 elsewhere, then relabel cancellous
/// within the cortical minima of either skull surface.
pub fn segment_skull(
    t2: &IntensityVolume,
    cm: &CompartmentMap,
    cfg: &RuleConfig,
) -> Vec<Option<Tissue>> {
    let grid = t2.grid();
    let center = cm.inner_center_mm();
    let nasal = ellipsoid_mask(
        grid,
        [
            center[0] + cfg.nasal_offset_mm[0],
            center[1] + cfg.nasal_offset_mm[1],
            center[2] + cfg.nasal_offset_mm[2],
        ],
        cfg.nasal_semi_mm,
    );
    let middle = cm.mask_of(Compartment::Middle);
    let inner = cm.mask_of(Compartment::Inner);
    let mut out = vec![None; grid.len()];
    for i in 0..grid.len() {
        if !middle.data()[i] {
            continue;
        }
        let v = t2.data()[i];
        out[i] = Some(if nasal.data()[i] {
            if v > cfg.t2_mucous_bright {
                Tissue::Mucous
            } else {
                Tissue::SkullCortical
            }
        } else if v > cfg.t2_bone_split {
            Tissue::SkullCancellous
        } else {
            Tissue::SkullCortical
        });
    }
    // Thickness enforcement, measured by exact distance transforms.
    let d_in = distance_transform(&inner);
    let outside = middle.union(&inner).expect("same grid").complement();
    let d_out = distance_transform(&outside);
    for i in 0..grid.len() {
        if out[i] == Some(Tissue::SkullCancellous)
            && (d_in[i] <= cfg.cortical_inner_min_mm || d_out[i] <= cfg.cortical_outer_min_mm)
        {
            out[i] = Some(Tissue::SkullCortical);
        }
    }
    out
}

/// Classify the outer compartment: eye globes from bright-T2 components
/// (their sealed cavities are lenses), then skin by depth from the head
/// surface, then fat/muscle by T1.
pub fn segment_outer(
    t1: &IntensityVolume,
    t2: &IntensityVolume,
    cm: &CompartmentMap,
    head: &Mask,
    cfg: &RuleConfig,
) -> Vec<Option<Tissue>> {
    let grid = t1.grid();
    let outer = cm.mask_of(Compartment::Outer);
    let candidates = Mask::new(
        grid,
        (0..grid.len())
            .map(|i| outer.data()[i] && t2.data()[i] > cfg.t2_csf_bright)
            .collect(),
    )
    .expect("grid matches");
    let (ids, sizes) = connected_components(&candidates, Connectivity::Six);
    let eye = Mask::new(
        grid,
        ids.iter()
            .map(|&id| id != 0 && sizes[id as usize - 1] >= cfg.min_eye_voxels)
            .collect(),
    )
    .expect("grid matches");
    let globes = fill_holes(&eye);

    let d_air = distance_transform(&head.complement());
    let skin_depth = cfg.skin_depth_mm.clamp(cfg.scalp_min_mm, cfg.scalp_max_mm);
    let mut out = vec![None; grid.len()];
    for i in 0..grid.len() {
        if !outer.data()[i] {
            continue;
        }
        out[i] = Some(if globes.data()[i] {
            if eye.data()[i] {
                Tissue::VitreousHumor
            } else {
                Tissue::Lens
            }
        } else if d_air[i] <= skin_depth {
            Tissue::Skin
        } else {
            let v = t1.data()[i];
            if v > cfg.t1_fat_min {
                Tissue::Fat
            } else if v > cfg.t1_muscle_min {
                Tissue::Muscle
            } else {
                Tissue::Skin
            }
        });
    }
    out
}

/// Relabel small CSF components that lie outside the space enclosed by the
/// skull (mouth artifacts). Each deleted component takes the most common
/// non-CSF label among its 26-neighbours, ties to the lowest code.
pub fn cleanup_csf_outside_skull(
    labels: &LabelVolume,
    min_voxels: usize,
) -> (LabelVolume, usize) {
    let grid = labels.grid();
    let skull = Mask::new(
        grid,
        labels
            .labels()
            .iter()
            .map(|&c| {
                c == Tissue::SkullCortical.code()
                    || c == Tissue::SkullCancellous.code()
                    || c == Tissue::Mucous.code()
            })
            .collect(),
    )
    .expect("grid matches");
    let enclosed = fill_holes(&skull).minus(&skull).expect("same grid");
    let csf = labels.mask_of(Tissue::Csf);
    let (ids, sizes) = connected_components(&csf, Connectivity::Six);
    let mut delete = vec![false; sizes.len() + 1];
    for (k, &size) in sizes.iter().enumerate() {
        if size < min_voxels {
            delete[k + 1] = true;
        }
    }
    // Components with any voxel inside the skull cavity are kept.
    for i in 0..grid.len() {
        if ids[i] != 0 && enclosed.data()[i] {
            delete[ids[i] as usize] = false;
        }
    }
    let mut out = labels.clone();
    let mut changed = 0usize;
    for i in 0..grid.len() {
        if ids[i] == 0 || !delete[ids[i] as usize] {
            continue;
        }
        let [x, y, z] = grid.coords(i);
        let mut counts = [0usize; Tissue::COUNT];
        for off in Connectivity::TwentySix.offsets() {
            let p = [x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]];
            if grid.contains(p) {
                let j = grid.index(p[0] as usize, p[1] as usize, p[2] as usize);
                let c = labels.labels()[j];
                if c != Tissue::Csf.code() {
                    counts[c as usize] += 1;
                }
            }
        }
        let best = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c as u8)
            .unwrap_or(0);
        out.set(i, Tissue::from_code(best).expect("valid code"));
        changed += 1;
    }
    (out, changed)
}

#[derive(Debug, Clone)]
pub struct RulesegReport {
    pub tissue_counts: [usize; Tissue::COUNT],
    pub compartment_counts: [usize; 4],
    pub cleanup_relabelled: usize,
    pub warnings: Vec<String>,
}

/// The composed rule pipeline over a preprocessed volume pair.
pub fn run_ruleseg(
    t1: &IntensityVolume,
    t2: &IntensityVolume,
    cfg: &RuleConfig,
    cleanup: bool,
) -> Result<(LabelVolume, RulesegReport), RulesegError> {
    let stage = |stage: &'static str, e: RulesegError| RulesegError::Stage {
        stage,
        source: Box::new(e),
    };
    let grid = t1.grid();
    let head = head_mask_from_normalized(t1, t2, cfg.head_threshold)?;
    let cm = split_compartments(t2, &head, cfg).map_err(|e| stage("split_compartments", e))?;
    let (brain, mut warnings) = brain_split(t1, &cm, cfg);
    let inner_labels =
        segment_inner(t2, &cm, &brain, cfg).map_err(|e| stage("segment_inner", e))?;
    let skull_labels = segment_skull(t2, &cm, cfg);
    let outer_labels = segment_outer(t1, t2, &cm, &head, cfg);

    let mut labels = vec![Tissue::Air.code(); grid.len()];
    for i in 0..grid.len() {
        let l = match cm.at(i) {
            Compartment::Inner => inner_labels[i],
            Compartment::Middle => skull_labels[i],
            Compartment::Outer => outer_labels[i],
            Compartment::Air => None,
        };
        if let Some(t) = l {
            labels[i] = t.code();
        }
    }
    let mut model = LabelVolume::new(grid, labels)?;
    let mut cleanup_relabelled = 0;
    if cleanup {
        let (cleaned, changed) = cleanup_csf_outside_skull(&model, cfg.cleanup_min_voxels);
        model = cleaned;
        cleanup_relabelled = changed;
    }
    let tissue_counts = model.counts();
    for t in Tissue::TISSUES {
        if tissue_counts[t.code() as usize] == 0 {
            warnings.push(format!("tissue {} is empty", t.name()));
        }
    }
    let compartment_counts = [
        cm.mask_of(Compartment::Air).count(),
        cm.mask_of(Compartment::Outer).count(),
        cm.mask_of(Compartment::Middle).count(),
        cm.mask_of(Compartment::Inner).count(),
    ];
    Ok((
        model,
        RulesegReport {
            tissue_counts,
            compartment_counts,
            cleanup_relabelled,
            warnings,
        },
    ))
}
