//! Catalog of example manifolds and vector fields, addressable by string id.

mod hyperbolic;
mod profiles;
mod revolution;
mod torus;
mod warped;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartedManifold, VectorFieldDef};

pub use hyperbolic::{
    conformal_field, distance as hyperbolic_distance, height as hyperboloid_height,
    inner as hyperbolic_inner, make_hyperbolic_plane, rotation_field,
};
pub use profiles::{WarpProfile, WarpTail};
pub use revolution::{
    make_surface_of_revolution, w_field, MeridianArclength, Revolution, RevolutionProfile,
};
pub use torus::{constant_field, make_flat_torus, wave_field};
pub use warped::{
    circle_generator, example4_fz, lift, make_circle, make_example4, make_radial_warp,
    make_warped_product, LiftKind, LiftedField, Warp, WarpedProduct,
};

/// The six (manifold, field) pairs the verification suite is built around.
pub const CHECK_PAIRS: [(&str, &str); 6] = [
    ("revolution:1/(1+x^2)", "W"),
    ("hyperbolic", "conformal"),
    ("hyperbolic", "rotation"),
    ("warp:ex2", "Zbar"),
    ("warp:ex3", "Ubar"),
    ("warp:ex4", "Z"),
];

/// Free parameters of the catalog constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZooParams {
    /// Plateau value `a` of the warping profiles.
    pub a: f64,
    /// Side length of the flat torus.
    pub torus_side: f64,
}

impl Default for ZooParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            torus_side: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ZooEntry {
    pub id: &'static str,
    pub description: &'static str,
    pub role: &'static str,
    pub fields: Vec<&'static str>,
}

struct Spec {
    id: &'static str,
    description: &'static str,
    role: &'static str,
    fields: &'static [&'static str],
}

const CATALOG: [Spec; 7] = [
    Spec {
        id: "torus",
        description: "flat torus R²/(L·Z)², L = torus_side",
        role: "compact and recurrent; baseline for flow and recurrence checks",
        fields: &["zero", "const", "wave"],
    },
    Spec {
        id: "cylinder",
        description: "round cylinder, profile f ≡ 1",
        role: "flat surface of revolution; baseline for the revolution machinery",
        fields: &["zero", "W"],
    },
    Spec {
        id: "revolution:1/(1+x^2)",
        description: "surface of revolution of f(x) = 1/(1+x²); W = x(1+x²)(0,−z,y)",
        role: "divergence-free W with bounded f_W and non-integrable |W|",
        fields: &["zero", "W"],
    },
    Spec {
        id: "hyperbolic",
        description: "hyperbolic plane, hyperboloid graph chart",
        role: "base of the warped products; exact geodesics and distance",
        fields: &["zero", "conformal", "rotation"],
    },
    Spec {
        id: "warp:ex2",
        description: "H² ×_b S¹, b = a·(sinh 2/sinh r)² tail; Zbar = horizontal lift of rotation",
        role: "finite volume, Killing Zbar with non-decaying norm",
        fields: &["zero", "Zbar", "Ubar"],
    },
    Spec {
        id: "warp:ex3",
        description: "H² ×_b S¹, b = 2a/(1+r) tail; Ubar = vertical lift of d/dt",
        role: "infinite volume, Killing Ubar with decaying norm",
        fields: &["zero", "Zbar", "Ubar"],
    },
    Spec {
        id: "warp:ex4",
        description: "H² ×_{1/z²} S¹; Z = horizontal lift of the conformal field",
        role: "finite volume 4π², conformal Z with ∫ div Z ≠ 0",
        fields: &["zero", "Z", "Ubar"],
    },
];

/// Stable-ordered catalog listing.
pub fn list_zoo() -> Vec<ZooEntry> {
    CATALOG
        .iter()
        .map(|s| ZooEntry {
            id: s.id,
            description: s.description,
            role: s.role,
            fields: s.fields.to_vec(),
        })
        .collect()
}

#[allow(clippy::large_enum_variant)]
enum Structure {
    Torus(f64),
    Revolution(Revolution),
    Hyperbolic,
    Warped(WarpedProduct),
}

/// A catalog manifold together with the construction data its fields need.
pub struct ZooManifold {
    pub id: String,
    pub manifold: ChartedManifold,
    structure: Structure,
}

impl std::fmt::Debug for ZooManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZooManifold")
            .field("id", &self.id)
            .field("manifold", &self.manifold)
            .finish()
    }
}

impl ZooManifold {
    pub fn field_ids(&self) -> &'static [&'static str] {
        CATALOG
            .iter()
            .find(|s| s.id == self.id)
            .map(|s| s.fields)
            .unwrap_or(&[])
    }

    pub fn revolution(&self) -> Option<&Revolution> {
        match &self.structure {
            Structure::Revolution(r) => Some(r),
            _ => None,
        }
    }

    pub fn warped(&self) -> Option<&WarpedProduct> {
        match &self.structure {
            Structure::Warped(w) => Some(w),
            _ => None,
        }
    }

    /// Resolves a field id against this manifold.
    pub fn field(&self, id: &str) -> Result<VectorFieldDef> {
        let unknown = || Error::UnknownId(format!("field `{id}` on `{}`", self.id));
        if !self.field_ids().contains(&id) {
            return Err(unknown());
        }
        if id == "zero" {
            return Ok(VectorFieldDef::zero(&self.manifold));
        }
        match (&self.structure, id) {
            (Structure::Torus(_), "const") => Ok(constant_field(&self.manifold)),
            (Structure::Torus(side), "wave") => Ok(wave_field(&self.manifold, *side)),
            (Structure::Revolution(r), "W") => Ok(w_field(r)),
            (Structure::Hyperbolic, "conformal") => Ok(conformal_field(&self.manifold)),
            (Structure::Hyperbolic, "rotation") => Ok(rotation_field(&self.manifold)),
            // both lifts are Killing: rotation and ∂t preserve a radial warp
            (Structure::Warped(w), "Zbar") => {
                let rot = rotation_field(&w.base);
                Ok(lift(w, &rot, LiftKind::Horizontal)?
                    .field
                    .renamed("Zbar")
                    .with_closed_fx(std::sync::Arc::new(|_, _| 0.0)))
            }
            (Structure::Warped(w), "Ubar") => {
                let gen = circle_generator(&w.fiber);
                Ok(lift(w, &gen, LiftKind::Vertical)?
                    .field
                    .renamed("Ubar")
                    .with_closed_fx(std::sync::Arc::new(|_, _| 0.0)))
            }
            (Structure::Warped(w), "Z") => {
                let x = conformal_field(&w.base);
                Ok(lift(w, &x, LiftKind::Horizontal)?
                    .field
                    .renamed("Z")
                    .with_closed_fx(std::sync::Arc::new(example4_fz)))
            }
            _ => Err(unknown()),
        }
    }

    /// The lift record behind a warped-product field.
    pub fn lifted(&self, id: &str) -> Result<LiftedField> {
        let w = self
            .warped()
            .ok_or_else(|| Error::Invalid(format!("`{}` is not a warped product", self.id)))?;
        match id {
            "Zbar" => lift(w, &rotation_field(&w.base), LiftKind::Horizontal),
            "Ubar" => lift(w, &circle_generator(&w.fiber), LiftKind::Vertical),
            "Z" if self.id == "warp:ex4" => {
                lift(w, &conformal_field(&w.base), LiftKind::Horizontal)
            }
            _ => Err(Error::UnknownId(format!(
                "lifted field `{id}` on `{}`",
                self.id
            ))),
        }
    }
}

/// Resolves a manifold id.
pub fn manifold(id: &str, params: &ZooParams) -> Result<ZooManifold> {
    let (manifold, structure) = match id {
        "torus" => {
            if !(params.torus_side > 0.0) {
                return Err(Error::Invalid("torus_side must be positive".into()));
            }
            (
                make_flat_torus(params.torus_side),
                Structure::Torus(params.torus_side),
            )
        }
        "cylinder" => {
            let r = make_surface_of_revolution(id, RevolutionProfile::cylinder());
            (r.manifold.clone(), Structure::Revolution(r))
        }
        "revolution:1/(1+x^2)" => {
            let r = make_surface_of_revolution(id, RevolutionProfile::witch());
            (r.manifold.clone(), Structure::Revolution(r))
        }
        "hyperbolic" => (make_hyperbolic_plane(), Structure::Hyperbolic),
        "warp:ex2" | "warp:ex3" => {
            if !(params.a > 0.0) {
                return Err(Error::Invalid("warp plateau a must be positive".into()));
            }
            let tail = if id == "warp:ex2" {
                WarpTail::Example2
            } else {
                WarpTail::Example3
            };
            let w = make_radial_warp(id, WarpProfile::new(params.a, tail));
            (w.manifold.clone(), Structure::Warped(w))
        }
        "warp:ex4" => {
            let w = make_example4(id);
            (w.manifold.clone(), Structure::Warped(w))
        }
        _ => return Err(Error::UnknownId(format!("manifold `{id}`"))),
    };
    Ok(ZooManifold {
        id: id.to_string(),
        manifold,
        structure,
    })
}
