//! Flat parameter layout shared by the optimizer, the finite-difference
//! oracle and checkpoints.

use nalgebra::Vector3;

use crate::scene::{Gaussian3D, GaussianCloud, SH_COEFFS};

/// Trainable scalar groups of a Gaussian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Position,
    LogScale,
    Rotation,
    OpacityLogit,
    ShDiffuse,
    ShSpecular,
    SpecularLogit,
    Visibility,
    LocalLight,
}

impl Field {
    pub const ALL: [Field; 9] = [
        Field::Position,
        Field::LogScale,
        Field::Rotation,
        Field::OpacityLogit,
        Field::ShDiffuse,
        Field::ShSpecular,
        Field::SpecularLogit,
        Field::Visibility,
        Field::LocalLight,
    ];

    pub fn len(self) -> usize {
        match self {
            Field::Position | Field::LogScale | Field::LocalLight => 3,
            Field::Rotation => 4,
            Field::OpacityLogit | Field::SpecularLogit | Field::Visibility => 1,
            Field::ShDiffuse | Field::ShSpecular => SH_COEFFS * 3,
        }
    }

    /// Offset of the field inside the flat per-Gaussian vector.
    pub fn offset(self) -> usize {
        let mut off = 0;
        for f in Field::ALL {
            if f == self {
                return off;
            }
            off += f.len();
        }
        unreachable!()
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Position => "position",
            Field::LogScale => "log_scale",
            Field::Rotation => "rotation",
            Field::OpacityLogit => "opacity_logit",
            Field::ShDiffuse => "sh_diffuse",
            Field::ShSpecular => "sh_specular",
            Field::SpecularLogit => "specular_logit",
            Field::Visibility => "visibility",
            Field::LocalLight => "local_light",
        }
    }

    /// Field owning flat index `i`.
    pub fn of_index(i: usize) -> Field {
        let mut off = 0;
        for f in Field::ALL {
            off += f.len();
            if i < off {
                return f;
            }
        }
        panic!("parameter index {i} out of range")
    }
}

pub const PARAMS_PER_GAUSSIAN: usize = 3 + 3 + 4 + 1 + 2 * SH_COEFFS * 3 + 1 + 1 + 3;

pub type FlatParams = [f64; PARAMS_PER_GAUSSIAN];

fn write_sh(out: &mut [f64], sh: &crate::scene::ShCoeffs) {
    for (k, row) in sh.iter().enumerate() {
        out[k * 3..k * 3 + 3].copy_from_slice(row);
    }
}

fn read_sh(src: &[f64]) -> crate::scene::ShCoeffs {
    let mut sh = [[0.0; 3]; SH_COEFFS];
    for (k, row) in sh.iter_mut().enumerate() {
        row.copy_from_slice(&src[k * 3..k * 3 + 3]);
    }
    sh
}

pub fn flatten(g: &Gaussian3D) -> FlatParams {
    let mut p = [0.0; PARAMS_PER_GAUSSIAN];
    let at = |f: Field| f.offset()..f.offset() + f.len();
    p[at(Field::Position)].copy_from_slice(g.position.as_slice());
    p[at(Field::LogScale)].copy_from_slice(g.log_scale.as_slice());
    p[at(Field::Rotation)].copy_from_slice(&g.rotation);
    p[Field::OpacityLogit.offset()] = g.opacity_logit;
    write_sh(&mut p[at(Field::ShDiffuse)], &g.sh_diffuse);
    write_sh(&mut p[at(Field::ShSpecular)], &g.sh_specular);
    p[Field::SpecularLogit.offset()] = g.specular_logit;
    p[Field::Visibility.offset()] = g.visibility;
    p[at(Field::LocalLight)].copy_from_slice(g.local_light.as_slice());
    p
}

pub fn unflatten(p: &[f64]) -> Gaussian3D {
    assert_eq!(p.len(), PARAMS_PER_GAUSSIAN);
    let v3 = |f: Field| Vector3::from_column_slice(&p[f.offset()..f.offset() + 3]);
    let r = Field::Rotation.offset();
    Gaussian3D {
        position: v3(Field::Position),
        log_scale: v3(Field::LogScale),
        rotation: [p[r], p[r + 1], p[r + 2], p[r + 3]],
        opacity_logit: p[Field::OpacityLogit.offset()],
        sh_diffuse: read_sh(&p[Field::ShDiffuse.offset()..]),
        sh_specular: read_sh(&p[Field::ShSpecular.offset()..]),
        specular_logit: p[Field::SpecularLogit.offset()],
        visibility: p[Field::Visibility.offset()],
        local_light: v3(Field::LocalLight),
    }
}

/// Address of one trainable scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamRef {
    Gaussian { index: usize, field: Field, component: usize },
    GlobalLight(usize),
}

impl ParamRef {
    pub fn flat_index(&self) -> Option<usize> {
        match *self {
            ParamRef::Gaussian { field, component, .. } => Some(field.offset() + component),
            ParamRef::GlobalLight(_) => None,
        }
    }

    pub fn read(&self, cloud: &GaussianCloud) -> f64 {
        match *self {
            ParamRef::Gaussian { index, .. } => flatten(&cloud.gaussians[index])[self.flat_index().unwrap()],
            ParamRef::GlobalLight(c) => cloud.global_light[c],
        }
    }

    pub fn write(&self, cloud: &mut GaussianCloud, value: f64) {
        match *self {
            ParamRef::Gaussian { index, .. } => {
                let mut p = flatten(&cloud.gaussians[index]);
                p[self.flat_index().unwrap()] = value;
                cloud.gaussians[index] = unflatten(&p);
            }
            ParamRef::GlobalLight(c) => cloud.global_light[c] = value,
        }
    }
}

/// Every trainable scalar of a cloud, Gaussians first.
pub fn all_params(cloud: &GaussianCloud) -> Vec<ParamRef> {
    let mut out = Vec::with_capacity(cloud.len() * PARAMS_PER_GAUSSIAN + 3);
    for index in 0..cloud.len() {
        for field in Field::ALL {
            for component in 0..field.len() {
                out.push(ParamRef::Gaussian { index, field, component });
            }
        }
    }
    out.extend((0..3).map(ParamRef::GlobalLight));
    out
}
