use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGE_SIZE: usize = 64;

/// Minimum centre-to-centre distance along the relation axis.
pub const RELATION_MARGIN: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Circle,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
    None,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Square, Shape::Circle, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
        }
    }
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [1.0, 0.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Blue => [0.0, 0.0, 1.0],
            Color::Yellow => [1.0, 1.0, 0.0],
        }
    }
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::LeftOf,
        Relation::RightOf,
        Relation::Above,
        Relation::Below,
        Relation::None,
    ];
    pub const SPATIAL: [Relation; 4] = [Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below];

    pub fn name(self) -> &'static str {
        match self {
            Relation::LeftOf => "left-of",
            Relation::RightOf => "right-of",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::None => "none",
        }
    }

    pub fn opposite(self) -> Relation {
        match self {
            Relation::LeftOf => Relation::RightOf,
            Relation::RightOf => Relation::LeftOf,
            Relation::Above => Relation::Below,
            Relation::Below => Relation::Above,
            Relation::None => Relation::None,
        }
    }

    /// The word swap that accompanies a left-right mirror.
    pub fn mirrored(self) -> Relation {
        match self {
            Relation::LeftOf | Relation::RightOf => self.opposite(),
            other => other,
        }
    }

    /// Signed distance by which `a` satisfies the relation to `b`, measured
    /// between box centres along the relation axis. `None` for `Relation::None`.
    pub fn lead(self, a: &BBox, b: &BBox) -> Option<f64> {
        let (ax, ay) = a.center();
        let (bx, by) = b.center();
        match self {
            Relation::LeftOf => Some(bx - ax),
            Relation::RightOf => Some(ax - bx),
            Relation::Above => Some(by - ay),
            Relation::Below => Some(ay - by),
            Relation::None => None,
        }
    }
}

macro_rules! token_enum {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                <$ty>::ALL
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::UnknownToken(s.to_string()))
            }
        }
    };
}

token_enum!(Shape);
token_enum!(Color);
token_enum!(Relation);

/// Axis-aligned box in pixel coordinates, `min` inclusive and `max` exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox { x_min, y_min, x_max, y_max }
    }

    pub fn square(x: f64, y: f64, size: f64) -> Self {
        BBox::new(x, y, x + size, y + size)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max].iter().all(|v| v.is_finite())
            && self.width() > 0.0
            && self.height() > 0.0
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(0.0) * h.max(0.0)
    }

    /// Intersection over union; zero when either box has no area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Mirror about the vertical axis of an image `width` pixels wide.
    pub fn mirrored_x(&self, width: f64) -> BBox {
        BBox::new(width - self.x_max, self.y_min, width - self.x_min, self.y_max)
    }

    pub fn clipped(&self, width: f64, height: f64) -> BBox {
        BBox::new(
            self.x_min.clamp(0.0, width),
            self.y_min.clamp(0.0, height),
            self.x_max.clamp(0.0, width),
            self.y_max.clamp(0.0, height),
        )
    }

    pub fn inside(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }

    fn grown(&self, by: f64) -> BBox {
        BBox::new(self.x_min - by, self.y_min - by, self.x_max + by, self.y_max + by)
    }

    /// Whether the boxes overlap or come closer than `gap` pixels.
    pub fn crowds(&self, other: &BBox, gap: f64) -> bool {
        self.grown(gap / 2.0).intersection(&other.grown(gap / 2.0)) > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub bbox: BBox,
}

impl SceneObject {
    pub fn kind(&self) -> (Color, Shape) {
        (self.color, self.shape)
    }
}

/// Fixed five-slot referring expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Expression {
    pub target: (Color, Shape),
    pub relation: Relation,
    /// Present exactly when `relation` is spatial.
    pub referent: Option<(Color, Shape)>,
}

impl Expression {
    pub fn new(target: (Color, Shape), relation: Relation, referent: Option<(Color, Shape)>) -> Result<Self> {
        if (relation == Relation::None) != referent.is_none() {
            return Err(Error::Contract(format!(
                "relation {relation} requires {} referent slots",
                if referent.is_some() { "null" } else { "filled" }
            )));
        }
        Ok(Expression { target, relation, referent })
    }

    pub fn plain(target: (Color, Shape)) -> Self {
        Expression { target, relation: Relation::None, referent: None }
    }

    /// The same expression after a left-right mirror of the scene.
    pub fn mirrored(&self) -> Self {
        Expression {
            relation: self.relation.mirrored(),
            ..*self
        }
    }

    /// Indices of the objects that satisfy every slot.
    pub fn matches(&self, objects: &[SceneObject]) -> Vec<usize> {
        objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.kind() == self.target)
            .filter(|(_, o)| match self.referent {
                None => true,
                Some(kind) => objects.iter().any(|r| {
                    r.kind() == kind
                        && self
                            .relation
                            .lead(&o.bbox, &r.bbox)
                            .is_some_and(|d| d >= RELATION_MARGIN)
                }),
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Whether any candidate/referent pair sits inside the relation margin,
    /// where the ground truth would be a coin flip.
    pub fn is_ambiguous(&self, objects: &[SceneObject]) -> bool {
        let Some(kind) = self.referent else { return false };
        objects.iter().filter(|o| o.kind() == self.target).any(|o| {
            objects
                .iter()
                .filter(|r| r.kind() == kind)
                .any(|r| self.relation.lead(&o.bbox, &r.bbox).is_some_and(|d| d.abs() < RELATION_MARGIN))
        })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.target.0, self.target.1)?;
        if let Some((c, s)) = self.referent {
            write!(f, " {} {c} {s}", self.relation)?;
        }
        Ok(())
    }
}
