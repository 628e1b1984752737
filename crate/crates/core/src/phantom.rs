//! Procedural head phantoms: co-registered T1/T2-like volumes with ground
//! truth labels for all 16 tissue codes, plus cohort generation with
//! built-in aging trends so regression analyses have a known answer.
//!
//! Geometry is nested ellipsoids. Layer-derived labels (skin depth,
//! cortical bone enforcement zones, dura) are carved with the same exact
//! distance transforms the rule segmenter uses, so a noise-free phantom is
//! reproducible by rules exactly, not just approximately.

use crate::morpho::{Demographics, DensityTable, Sex, SubjectRecord};
use crate::vol::{
    distance_transform, ellipsoid_mask, Grid, IntensityVolume, LabelVolume, Mask, Modality, Tissue,
    VolumeError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    SpecInvalid(String),
    #[error("cohort size must be at least 1")]
    EmptyCohort,
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Stats(#[from] crate::morpho::StatsError),
}

/// Mean T1/T2 intensities per tissue (arbitrary units). The defaults keep
/// the contrast relations the rules rely on: CSF and vitreous humor bright
/// on T2, bone and blood dark on T2, fat brightest on T1.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueIntensityTable {
    pub t1: [f32; Tissue::COUNT],
    pub t2: [f32; Tissue::COUNT],
}

impl Default for TissueIntensityTable {
    fn default() -> Self {
        let mut t1 = [0.0f32; Tissue::COUNT];
        let mut t2 = [0.0f32; Tissue::COUNT];
        let mut set = |t: Tissue, a: f32, b: f32| {
            t1[t.code() as usize] = a;
            t2[t.code() as usize] = b;
        };
        set(Tissue::Air, 0.01, 0.01);
        set(Tissue::Skin, 0.70, 0.55);
        set(Tissue::Fat, 0.95, 0.50);
        set(Tissue::Muscle, 0.58, 0.45);
        set(Tissue::SkullCancellous, 0.45, 0.30);
        set(Tissue::SkullCortical, 0.22, 0.08);
        set(Tissue::BrainWm, 0.85, 0.50);
        set(Tissue::BrainGm, 0.60, 0.65);
        set(Tissue::CerebellumWm, 0.85, 0.50);
        set(Tissue::CerebellumGm, 0.60, 0.65);
        set(Tissue::Csf, 0.10, 0.95);
        set(Tissue::Dura, 0.40, 0.55);
        set(Tissue::VitreousHumor, 0.12, 0.92);
        set(Tissue::Lens, 0.35, 0.42);
        set(Tissue::Mucous, 0.30, 0.80);
        set(Tissue::Blood, 0.30, 0.05);
        TissueIntensityTable { t1, t2 }
    }
}

impl TissueIntensityTable {
    pub fn t1_of(&self, t: Tissue) -> f32 {
        self.t1[t.code() as usize]
    }

    pub fn t2_of(&self, t: Tissue) -> f32 {
        self.t2[t.code() as usize]
    }

    /// Ordinal relations the segmentation rules depend on.
    pub fn validate(&self) -> Result<(), PhantomError> {
        let t2 = |t: Tissue| self.t2_of(t);
        for bone in [Tissue::SkullCancellous, Tissue::SkullCortical, Tissue::Blood] {
            if !(t2(Tissue::Csf) > t2(bone)) {
                return Err(PhantomError::SpecInvalid(format!(
                    "CSF T2 must exceed {} T2",
                    bone.name()
                )));
            }
        }
        for other in [Tissue::Csf, Tissue::Dura] {
            if !(t2(Tissue::Blood) < t2(other)) {
                return Err(PhantomError::SpecInvalid(format!(
                    "blood T2 must be below {} T2",
                    other.name()
                )));
            }
        }
        Ok(())
    }
}

/// Full geometric and imaging description of one phantom. Thicknesses and
/// offsets are mm; the head is centered in the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    pub grid_edge: usize,
    pub spacing_mm: f64,
    pub head_semi_mm: [f64; 3],
    /// Outer compartment (scalp) thickness; skin occupies the outer
    /// `skin_depth_mm` of it, fat/muscle the rest.
    pub scalp_mm: f64,
    pub skin_depth_mm: f64,
    pub cortical_outer_mm: f64,
    pub cancellous_mm: f64,
    pub cortical_inner_mm: f64,
    pub cerebrum_offset_mm: [f64; 3],
    pub cerebrum_semi_mm: [f64; 3],
    pub gm_mm: f64,
    pub ventricle_semi_mm: [f64; 3],
    pub cerebellum_offset_mm: [f64; 3],
    pub cerebellum_semi_mm: [f64; 3],
    pub cerebellum_gm_mm: f64,
    pub dura_sector_z_mm: f64,
    pub dura_depth_mm: f64,
    pub nasal_offset_mm: [f64; 3],
    pub nasal_semi_mm: [f64; 3],
    pub eye_offset_x_mm: f64,
    pub eye_globe_r_mm: f64,
    pub lens_r_mm: f64,
    pub lens_forward_mm: f64,
    pub blood_center_yz_mm: [f64; 2],
    pub blood_radius_mm: f64,
    pub blood_half_len_mm: f64,
    /// Fat patch: deep-scalp voxels with x - center >= this.
    pub fat_min_x_mm: f64,
    pub noise_sigma: f32,
    pub bias_amplitude: f64,
    pub demographics: Demographics,
    pub intensities: TissueIntensityTable,
}

/// Default cerebellum prior region (offset and semi-axes plus margin),
/// shared with the rule segmenter's configuration.
pub const CEREBELLUM_OFFSET_MM: [f64; 3] = [0.0, -7.0, -6.3];
pub const CEREBELLUM_SEMI_MM: [f64; 3] = [4.5, 2.4, 2.2];
pub const CEREBELLUM_PRIOR_MARGIN_MM: f64 = 1.0;
/// Default nasal cavity prior region.
pub const NASAL_OFFSET_MM: [f64; 3] = [0.0, 15.2, -3.0];
pub const NASAL_SEMI_MM: [f64; 3] = [3.0, 2.2, 2.5];

impl PhantomSpec {
    /// Desk-scale phantom with the aging model applied: the cerebral
    /// mantle shrinks with age at the same rate as its gray shell, so GM
    /// falls, CSF grows, and WM stays constant.
    pub fn desk(seed: u64, grid_edge: usize, demographics: Demographics) -> PhantomSpec {
        let u = ((demographics.age_years - 20.0) / 60.0).clamp(0.0, 1.0);
        let shrink = 1.3 * u;
        PhantomSpec {
            seed,
            grid_edge,
            spacing_mm: 1.0,
            head_semi_mm: [19.0, 21.0, 19.0],
            scalp_mm: 4.0,
            skin_depth_mm: 2.0,
            cortical_outer_mm: 1.5,
            cancellous_mm: 1.0,
            cortical_inner_mm: 1.0,
            cerebrum_offset_mm: [0.0, 2.5, 2.5],
            cerebrum_semi_mm: [10.0 - shrink, 9.0 - shrink, 7.0 - shrink],
            gm_mm: 3.2 - shrink,
            ventricle_semi_mm: [2.5, 3.0, 1.6],
            cerebellum_offset_mm: CEREBELLUM_OFFSET_MM,
            cerebellum_semi_mm: CEREBELLUM_SEMI_MM,
            cerebellum_gm_mm: 1.2,
            dura_sector_z_mm: 6.0,
            dura_depth_mm: 1.2,
            nasal_offset_mm: NASAL_OFFSET_MM,
            nasal_semi_mm: NASAL_SEMI_MM,
            eye_offset_x_mm: 7.0,
            eye_globe_r_mm: 2.6,
            lens_r_mm: 0.9,
            lens_forward_mm: 0.8,
            blood_center_yz_mm: [-5.0, 8.5],
            blood_radius_mm: 0.9,
            blood_half_len_mm: 4.0,
            fat_min_x_mm: 3.0,
            noise_sigma: 0.0,
            bias_amplitude: 0.0,
            demographics,
            intensities: TissueIntensityTable::default(),
        }
    }

    fn grid(&self) -> Result<Grid, PhantomError> {
        Ok(Grid::cube(self.grid_edge, self.spacing_mm)?)
    }

    fn center(&self, grid: Grid) -> [f64; 3] {
        let e = grid.extent_mm();
        [e[0] / 2.0, e[1] / 2.0, e[2] / 2.0]
    }
}

pub struct PhantomOutput {
    pub t1: IntensityVolume,
    pub t2: IntensityVolume,
    pub truth: LabelVolume,
    pub record: SubjectRecord,
}

fn shrunk(semi: [f64; 3], by: f64) -> [f64; 3] {
    [semi[0] - by, semi[1] - by, semi[2] - by]
}

fn offset(center: [f64; 3], off: [f64; 3]) -> [f64; 3] {
    [center[0] + off[0], center[1] + off[1], center[2] + off[2]]
}

/// Deterministically build one phantom from its spec.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomOutput, PhantomError> {
    spec.intensities.validate()?;
    let grid = spec.grid()?;
    let c = spec.center(grid);

    let bone_total = spec.cortical_outer_mm + spec.cancellous_mm + spec.cortical_inner_mm;
    let e1_semi = shrunk(spec.head_semi_mm, spec.scalp_mm);
    let e2_semi = shrunk(e1_semi, bone_total);
    for (what, semi) in [
        ("skull outer surface", e1_semi),
        ("inner compartment", e2_semi),
        ("cerebrum", spec.cerebrum_semi_mm),
        (
            "cerebrum white matter core",
            shrunk(spec.cerebrum_semi_mm, spec.gm_mm),
        ),
        (
            "cerebellum white matter core",
            shrunk(spec.cerebellum_semi_mm, spec.cerebellum_gm_mm),
        ),
    ] {
        if semi.iter().any(|&s| s < 1.0) {
            return Err(PhantomError::SpecInvalid(format!(
                "layers exceed head radius: {what} semi-axes {semi:?} too small"
            )));
        }
    }
    let head_extent = spec.head_semi_mm.iter().cloned().fold(0.0, f64::max) * 2.0;
    if head_extent + 4.0 > grid.extent_mm()[0] {
        return Err(PhantomError::SpecInvalid(format!(
            "head extent {head_extent} mm does not fit grid {:?} mm",
            grid.extent_mm()
        )));
    }

    // Compartment shells.
    let head0 = ellipsoid_mask(grid, c, spec.head_semi_mm);
    let skull_outer_int = ellipsoid_mask(grid, c, e1_semi);
    let inner = ellipsoid_mask(grid, c, e2_semi);
    let bone = skull_outer_int.minus(&inner)?;

    // Eyes bulge at the front surface of the head.
    let eye_y = {
        // Solve the head ellipsoid for y at (x_off, z = +1.5).
        let fx = spec.eye_offset_x_mm / spec.head_semi_mm[0];
        let fz = 1.5 / spec.head_semi_mm[2];
        spec.head_semi_mm[1] * (1.0 - fx * fx - fz * fz).max(0.0).sqrt()
    };
    let mut globes = Mask::filled(grid, false);
    let mut lenses = Mask::filled(grid, false);
    for sign in [-1.0f64, 1.0] {
        let gc = [c[0] + sign * spec.eye_offset_x_mm, c[1] + eye_y, c[2] + 1.5];
        let globe = ellipsoid_mask(grid, gc, [spec.eye_globe_r_mm; 3]);
        let lens = ellipsoid_mask(
            grid,
            [gc[0], gc[1] + spec.lens_forward_mm, gc[2]],
            [spec.lens_r_mm; 3],
        );
        globes = globes.union(&globe)?;
        lenses = lenses.union(&lens)?;
    }
    if globes.intersect(&skull_outer_int)?.any() {
        return Err(PhantomError::SpecInvalid(
            "eye globes intersect the skull".into(),
        ));
    }
    let head = head0.union(&globes)?;
    let outer = head.minus(&skull_outer_int)?;

    // Bone split via exact distances to either compartment, matching the
    // enforcement rule downstream.
    let d_out = distance_transform(&skull_outer_int.complement());
    let d_in = distance_transform(&inner);
    let nasal = ellipsoid_mask(grid, offset(c, spec.nasal_offset_mm), spec.nasal_semi_mm);

    let mut labels = vec![Tissue::Air.code(); grid.len()];
    let idx = |t: Tissue| t.code();

    // Inner anatomy.
    let cerebrum_c = offset(c, spec.cerebrum_offset_mm);
    let cerebrum = ellipsoid_mask(grid, cerebrum_c, spec.cerebrum_semi_mm);
    let wm_core = ellipsoid_mask(grid, cerebrum_c, shrunk(spec.cerebrum_semi_mm, spec.gm_mm));
    let ventricle = ellipsoid_mask(grid, cerebrum_c, spec.ventricle_semi_mm);
    let cb_c = offset(c, spec.cerebellum_offset_mm);
    let cerebellum = ellipsoid_mask(grid, cb_c, spec.cerebellum_semi_mm);
    let cb_core = ellipsoid_mask(
        grid,
        cb_c,
        shrunk(spec.cerebellum_semi_mm, spec.cerebellum_gm_mm),
    );
    if cerebellum.intersect(&cerebrum)?.any() {
        return Err(PhantomError::SpecInvalid(
            "cerebellum intersects cerebrum".into(),
        ));
    }
    let cb_prior = ellipsoid_mask(
        grid,
        cb_c,
        [
            spec.cerebellum_semi_mm[0] + CEREBELLUM_PRIOR_MARGIN_MM,
            spec.cerebellum_semi_mm[1] + CEREBELLUM_PRIOR_MARGIN_MM,
            spec.cerebellum_semi_mm[2] + CEREBELLUM_PRIOR_MARGIN_MM,
        ],
    );
    if cb_prior.intersect(&cerebrum)?.any() {
        return Err(PhantomError::SpecInvalid(
            "cerebellum prior region overlaps cerebrum".into(),
        ));
    }
    for m in [&cerebrum, &cerebellum] {
        if m.minus(&inner)?.any() {
            return Err(PhantomError::SpecInvalid(
                "brain structure escapes the inner compartment".into(),
            ));
        }
    }

    // Distance from the middle compartment (bone) for dura placement.
    let d_bone = distance_transform(&bone);

    // Blood vessel: a tube along x inside the CSF space.
    let blood_c = [
        c[1] + spec.blood_center_yz_mm[0],
        c[2] + spec.blood_center_yz_mm[1],
    ];
    let blood = Mask::from_fn(grid, |x, y, z| {
        let p = grid.center_mm([x, y, z]);
        let dy = p[1] - blood_c[0];
        let dz = p[2] - blood_c[1];
        (p[0] - c[0]).abs() <= spec.blood_half_len_mm
            && (dy * dy + dz * dz).sqrt() <= spec.blood_radius_mm
    });
    let blood = blood.intersect(&inner)?;
    if !blood.any() {
        return Err(PhantomError::SpecInvalid("blood tube is empty".into()));
    }
    if blood.intersect(&cerebrum)?.any() || blood.intersect(&cerebellum)?.any() {
        return Err(PhantomError::SpecInvalid("blood tube touches brain".into()));
    }
    for i in 0..grid.len() {
        if blood.data()[i] && d_bone[i] <= 1.05 * spec.spacing_mm {
            return Err(PhantomError::SpecInvalid(
                "blood tube touches the skull".into(),
            ));
        }
    }

    // Assign inner labels: csf background, then structures.
    for i in 0..grid.len() {
        if inner.data()[i] {
            labels[i] = idx(Tissue::Csf);
        }
    }
    for i in 0..grid.len() {
        if cerebrum.data()[i] {
            labels[i] = if ventricle.data()[i] {
                idx(Tissue::Csf)
            } else if wm_core.data()[i] {
                idx(Tissue::BrainWm)
            } else {
                idx(Tissue::BrainGm)
            };
        } else if cerebellum.data()[i] {
            labels[i] = if cb_core.data()[i] {
                idx(Tissue::CerebellumWm)
            } else {
                idx(Tissue::CerebellumGm)
            };
        }
    }
    // Dura: a one-layer rim against the skull in the top sector, carved
    // from non-brain inner space only.
    for i in 0..grid.len() {
        if !inner.data()[i] || labels[i] != idx(Tissue::Csf) {
            continue;
        }
        let p = grid.center_mm(grid.coords(i));
        if p[2] - c[2] >= spec.dura_sector_z_mm && d_bone[i] <= spec.dura_depth_mm {
            labels[i] = idx(Tissue::Dura);
        }
    }
    for i in 0..grid.len() {
        if blood.data()[i] && labels[i] == idx(Tissue::Csf) {
            labels[i] = idx(Tissue::Blood);
        }
    }

    // Bone: cortical shells against both surfaces, cancellous between,
    // mucous carved strictly inside the bone wall in the nasal region.
    for i in 0..grid.len() {
        if !bone.data()[i] {
            continue;
        }
        labels[i] = if nasal.data()[i] {
            if d_out[i] > 1.1 * spec.spacing_mm && d_in[i] > 1.1 * spec.spacing_mm {
                idx(Tissue::Mucous)
            } else {
                idx(Tissue::SkullCortical)
            }
        } else if d_out[i] > spec.cortical_outer_mm && d_in[i] > spec.cortical_inner_mm {
            idx(Tissue::SkullCancellous)
        } else {
            idx(Tissue::SkullCortical)
        };
    }

    // Outer compartment: eyes first, then skin by depth from air, fat and
    // muscle splitting the deep scalp.
    let d_air = distance_transform(&head.complement());
    let skin_depth = spec.skin_depth_mm.clamp(2.0, 10.0);
    for i in 0..grid.len() {
        if !outer.data()[i] {
            continue;
        }
        labels[i] = if globes.data()[i] {
            if lenses.data()[i] {
                idx(Tissue::Lens)
            } else {
                idx(Tissue::VitreousHumor)
            }
        } else if d_air[i] <= skin_depth {
            idx(Tissue::Skin)
        } else {
            let p = grid.center_mm(grid.coords(i));
            if p[0] - c[0] >= spec.fat_min_x_mm {
                idx(Tissue::Fat)
            } else {
                idx(Tissue::Muscle)
            }
        };
    }

    // Lens voxels must be sealed inside vitreous humor for the eye rule.
    for i in 0..grid.len() {
        if labels[i] != idx(Tissue::Lens) {
            continue;
        }
        let [x, y, z] = grid.coords(i);
        for off in crate::vol::Connectivity::Six.offsets() {
            let p = [x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]];
            if !grid.contains(p) {
                return Err(PhantomError::SpecInvalid("lens reaches grid edge".into()));
            }
            let j = grid.index(p[0] as usize, p[1] as usize, p[2] as usize);
            if labels[j] != idx(Tissue::Lens) && labels[j] != idx(Tissue::VitreousHumor) {
                return Err(PhantomError::SpecInvalid(
                    "lens is not enclosed by vitreous humor".into(),
                ));
            }
        }
    }
    // Mucous must be sealed inside bone for the compartment split.
    for i in 0..grid.len() {
        if labels[i] != idx(Tissue::Mucous) {
            continue;
        }
        let [x, y, z] = grid.coords(i);
        for off in crate::vol::Connectivity::Six.offsets() {
            let p = [x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]];
            if !grid.contains(p) {
                continue;
            }
            let j = grid.index(p[0] as usize, p[1] as usize, p[2] as usize);
            let l = labels[j];
            if l != idx(Tissue::Mucous)
                && l != idx(Tissue::SkullCortical)
                && l != idx(Tissue::SkullCancellous)
            {
                return Err(PhantomError::SpecInvalid(
                    "mucous is not enclosed by bone".into(),
                ));
            }
        }
    }

    let truth = LabelVolume::new(grid, labels)?;
    let counts = truth.counts();
    for t in Tissue::ALL {
        if counts[t.code() as usize] == 0 {
            return Err(PhantomError::SpecInvalid(format!(
                "tissue {} is absent from the phantom",
                t.name()
            )));
        }
    }

    // Intensities: table mean per label, optional multiplicative bias
    // field, optional Gaussian noise. Deterministic in scan order.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut t1 = Vec::with_capacity(grid.len());
    let mut t2 = Vec::with_capacity(grid.len());
    let e = grid.extent_mm();
    for i in 0..grid.len() {
        let t = Tissue::ALL[truth.labels()[i] as usize];
        let field = if spec.bias_amplitude != 0.0 {
            let p = grid.center_mm(grid.coords(i));
            let nx = 2.0 * p[0] / e[0] - 1.0;
            let ny = 2.0 * p[1] / e[1] - 1.0;
            let nz = 2.0 * p[2] / e[2] - 1.0;
            (spec.bias_amplitude * (nx + 0.5 * ny - 0.25 * nz)).exp() as f32
        } else {
            1.0
        };
        let mut v1 = spec.intensities.t1_of(t) * field;
        let mut v2 = spec.intensities.t2_of(t) * field;
        if spec.noise_sigma > 0.0 {
            let n1: f32 = rng.sample(StandardNormal);
            let n2: f32 = rng.sample(StandardNormal);
            v1 += spec.noise_sigma * n1;
            v2 += spec.noise_sigma * n2;
        }
        t1.push(v1.max(1e-4));
        t2.push(v2.max(1e-4));
    }
    let t1 = IntensityVolume::new(grid, t1, Modality::T1)?;
    let t2 = IntensityVolume::new(grid, t2, Modality::T2)?;

    let record = SubjectRecord::compute(
        &format!("phantom{:04}", spec.seed),
        &spec.demographics,
        &truth,
        &DensityTable::default(),
    )?;

    Ok(PhantomOutput {
        t1,
        t2,
        truth,
        record,
    })
}

/// Demographics for subject `index` of a cohort: alternating sex, ages
/// spread uniformly, plausible height/weight.
pub fn cohort_demographics(seed: u64, index: usize) -> Demographics {
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(index as u64 + 1)),
    );
    let sex = if index % 2 == 0 { Sex::F } else { Sex::M };
    let age = rng.gen_range(20.0..80.0);
    let height = match sex {
        Sex::M => rng.gen_range(1.62..1.92),
        _ => rng.gen_range(1.52..1.82),
    };
    let weight = rng.gen_range(48.0..98.0);
    Demographics {
        age_years: age,
        sex,
        height_m: height,
        weight_kg: weight,
    }
}

/// Specs for an n-subject cohort with the built-in aging trends.
pub fn cohort_specs(
    n: usize,
    seed: u64,
    grid_edge: usize,
    noise_sigma: f32,
    bias_amplitude: f64,
) -> Result<Vec<PhantomSpec>, PhantomError> {
    if n == 0 {
        return Err(PhantomError::EmptyCohort);
    }
    Ok((0..n)
        .map(|i| {
            let demo = cohort_demographics(seed, i);
            let mut spec = PhantomSpec::desk(seed.wrapping_add(i as u64), grid_edge, demo);
            spec.noise_sigma = noise_sigma;
            spec.bias_amplitude = bias_amplitude;
            spec
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morpho::{regress, Field, Group};
    use std::f64::consts::PI;

    fn demo(age: f64) -> Demographics {
        Demographics {
            age_years: age,
            sex: Sex::F,
            height_m: 1.7,
            weight_kg: 65.0,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = PhantomSpec::desk(7, 48, demo(40.0));
        spec.noise_sigma = 0.02;
        spec.bias_amplitude = 0.1;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.t1, b.t1);
        assert_eq!(a.t2, b.t2);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn noise_free_intensities_equal_table_means() {
        let spec = PhantomSpec::desk(3, 48, demo(55.0));
        let out = generate(&spec).unwrap();
        let table = &spec.intensities;
        for i in 0..out.truth.grid().len() {
            let t = Tissue::ALL[out.truth.labels()[i] as usize];
            assert_eq!(out.t1.data()[i], table.t1_of(t));
            assert_eq!(out.t2.data()[i], table.t2_of(t));
        }
    }

    #[test]
    fn all_tissues_present() {
        for age in [20.0, 50.0, 79.0] {
            let out = generate(&PhantomSpec::desk(1, 48, demo(age))).unwrap();
            let counts = out.truth.counts();
            for t in Tissue::ALL {
                assert!(
                    counts[t.code() as usize] > 0,
                    "{} missing at age {age}",
                    t.name()
                );
            }
        }
    }

    #[test]
    fn wm_volume_matches_analytic_ellipsoid() {
        let spec = PhantomSpec::desk(11, 48, demo(50.0));
        let out = generate(&spec).unwrap();
        let counts = out.truth.counts();
        let wm = counts[Tissue::BrainWm.code() as usize] as f64;
        let semi = [
            spec.cerebrum_semi_mm[0] - spec.gm_mm,
            spec.cerebrum_semi_mm[1] - spec.gm_mm,
            spec.cerebrum_semi_mm[2] - spec.gm_mm,
        ];
        let vent = spec.ventricle_semi_mm;
        let analytic =
            4.0 / 3.0 * PI * (semi[0] * semi[1] * semi[2] - vent[0] * vent[1] * vent[2]);
        let rel = (wm - analytic).abs() / analytic;
        assert!(rel < 0.05, "wm {wm} vs analytic {analytic} (rel {rel})");
    }

    #[test]
    fn cortical_shells_satisfy_thickness_minima_by_construction() {
        let out = generate(&PhantomSpec::desk(5, 48, demo(35.0))).unwrap();
        let truth = &out.truth;
        let grid = truth.grid();
        // Distances recomputed from the labels, as the verifier would.
        let bone = truth
            .mask_of(Tissue::SkullCancellous)
            .union(&truth.mask_of(Tissue::SkullCortical))
            .unwrap()
            .union(&truth.mask_of(Tissue::Mucous))
            .unwrap();
        let inner_tissues = [
            Tissue::Csf,
            Tissue::Dura,
            Tissue::Blood,
            Tissue::BrainWm,
            Tissue::BrainGm,
            Tissue::CerebellumWm,
            Tissue::CerebellumGm,
        ];
        let mut inner = Mask::filled(grid, false);
        for t in inner_tissues {
            inner = inner.union(&truth.mask_of(t)).unwrap();
        }
        let outer_side = bone.union(&inner).unwrap().complement();
        let d_out = distance_transform(&outer_side);
        let d_in = distance_transform(&inner);
        for i in 0..grid.len() {
            if truth.labels()[i] == Tissue::SkullCancellous.code() {
                assert!(d_out[i] > 1.5, "cancellous voxel {i} at d_out {}", d_out[i]);
                assert!(d_in[i] > 1.0, "cancellous voxel {i} at d_in {}", d_in[i]);
            }
        }
    }

    #[test]
    fn undersized_spec_is_rejected() {
        let mut spec = PhantomSpec::desk(1, 48, demo(40.0));
        spec.scalp_mm = 15.0;
        assert!(matches!(generate(&spec), Err(PhantomError::SpecInvalid(_))));
        let spec = PhantomSpec::desk(1, 24, demo(40.0));
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn cohort_has_aging_trends() {
        let specs = cohort_specs(24, 42, 48, 0.0, 0.0).unwrap();
        let records: Vec<_> = specs.iter().map(|s| generate(s).unwrap().record).collect();
        let gm = regress(
            &records,
            Field::Age,
            Field::VolumeMl(Tissue::BrainGm),
            Group::All,
        )
        .unwrap();
        assert!(gm.slope < 0.0, "GM slope {}", gm.slope);
        let csf = regress(
            &records,
            Field::Age,
            Field::VolumeMl(Tissue::Csf),
            Group::All,
        )
        .unwrap();
        assert!(csf.slope > 0.0, "CSF slope {}", csf.slope);
    }

    #[test]
    fn empty_cohort_is_an_error() {
        assert!(matches!(
            cohort_specs(0, 1, 48, 0.0, 0.0),
            Err(PhantomError::EmptyCohort)
        ));
    }
}
