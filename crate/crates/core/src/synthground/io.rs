use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::GroundingSample;
use super::scene::{BBox, SceneObject};
use super::vocab::{parse_slots, slot_words};
use crate::error::{Error, Result};
use crate::tensor::{read_checkpoint, write_checkpoint};

pub const MANIFEST: &str = "manifest.csv";
pub const IMAGES: &str = "images.lbyl";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    id: usize,
    tgt_color: String,
    tgt_shape: String,
    relation: String,
    ref_color: String,
    ref_shape: String,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    critical: u8,
    /// `color shape x_min y_min x_max y_max`, `;`-separated.
    objects: String,
}

fn format_objects(objects: &[SceneObject]) -> String {
    objects
        .iter()
        .map(|o| {
            let b = o.bbox;
            format!("{} {} {} {} {} {}", o.color, o.shape, b.x_min, b.y_min, b.x_max, b.y_max)
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_objects(s: &str) -> Result<Vec<SceneObject>> {
    s.split(';')
        .map(|item| {
            let f: Vec<&str> = item.split(' ').collect();
            let [color, shape, coords @ ..] = f.as_slice() else {
                return Err(Error::Format(format!("bad object `{item}`")));
            };
            let c: Vec<f64> = coords
                .iter()
                .map(|v| v.parse().map_err(|_| Error::Format(format!("bad coordinate `{v}`"))))
                .collect::<Result<_>>()?;
            let [x0, y0, x1, y1] = c.as_slice() else {
                return Err(Error::Format(format!("object `{item}` needs four coordinates")));
            };
            Ok(SceneObject {
                color: color.parse()?,
                shape: shape.parse()?,
                bbox: BBox::new(*x0, *y0, *x1, *y1),
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Write `manifest.csv` plus one image tensor per sample into `dir`.
pub fn save_dataset(dir: &Path, samples: &[GroundingSample]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(MANIFEST)).map_err(csv_err)?;
    for s in samples {
        let [tgt_color, tgt_shape, relation, ref_color, ref_shape] = slot_words(&s.expression).map(String::from);
        let t = s.target;
        w.serialize(Row {
            id: s.id,
            tgt_color,
            tgt_shape,
            relation,
            ref_color,
            ref_shape,
            x_min: t.x_min,
            y_min: t.y_min,
            x_max: t.x_max,
            y_max: t.y_max,
            critical: u8::from(s.relation_critical),
            objects: format_objects(&s.objects),
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    let entries: Vec<_> = samples.iter().map(|s| (s.id.to_string(), s.image.clone())).collect();
    let mut out = BufWriter::new(File::create(dir.join(IMAGES))?);
    write_checkpoint(&mut out, &entries)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<GroundingSample>> {
    let mut r = csv::Reader::from_path(dir.join(MANIFEST)).map_err(csv_err)?;
    let images = read_checkpoint(&mut BufReader::new(File::open(dir.join(IMAGES))?))?;
    let mut samples = Vec::new();
    for (row, (name, image)) in r.deserialize::<Row>().zip(images) {
        let row = row.map_err(csv_err)?;
        if name != row.id.to_string() {
            return Err(Error::Format(format!("image `{name}` does not match manifest id {}", row.id)));
        }
        if image.shape() != [3, 64, 64] {
            return Err(Error::Format(format!("image {name} has shape {:?}", image.shape())));
        }
        let words = [&row.tgt_color, &row.tgt_shape, &row.relation, &row.ref_color, &row.ref_shape].map(String::as_str);
        samples.push(GroundingSample {
            id: row.id,
            image,
            expression: parse_slots(&words)?,
            target: BBox::new(row.x_min, row.y_min, row.x_max, row.y_max),
            objects: parse_objects(&row.objects)?,
            relation_critical: row.critical != 0,
        });
    }
    Ok(samples)
}
