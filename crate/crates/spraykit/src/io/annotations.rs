//! Plain delimited annotation files: a header row, then one record per
//! object. Confidence is left empty for ground truth.

use std::io::Write;
use std::path::Path;

use crate::deteval::{Annotation, ObjectClass};
use crate::geometry::OrientedBox;

use super::IoError;

const HEADER: &str = "image_id,class,cx,cy,w,h,angle_rad,confidence";

pub fn write_annotation_file<'a>(
    path: &Path,
    annotations: impl IntoIterator<Item = &'a Annotation>,
) -> Result<(), IoError> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for a in annotations {
        let conf = a.confidence.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            a.image_id,
            a.class.as_str(),
            a.bbox.center_x,
            a.bbox.center_y,
            a.bbox.width,
            a.bbox.height,
            a.bbox.angle,
            conf
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| IoError::file(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| IoError::file(path, e))
}

pub fn read_annotation_file(path: &Path) -> Result<Vec<Annotation>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let parse_err = |line: usize, message: String| IoError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(parse_err(1, format!("expected header {HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(lineno, format!("expected 8 fields, got {}", fields.len())));
        }
        let num = |idx: usize| -> Result<f64, IoError> {
            let v: f64 = fields[idx]
                .trim()
                .parse()
                .map_err(|e| parse_err(lineno, format!("field {}: {e}", idx + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("field {} not finite", idx + 1)));
            }
            Ok(v)
        };
        let class = ObjectClass::parse(fields[1].trim())
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        let bbox = OrientedBox::new(num(2)?, num(3)?, num(4)?, num(5)?, num(6)?)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        let confidence = if fields[7].trim().is_empty() {
            None
        } else {
            Some(num(7)?)
        };
        out.push(Annotation {
            image_id: fields[0].trim().to_string(),
            class,
            bbox,
            confidence,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        let anns = vec![
            Annotation::ground_truth(
                "img_00000",
                ObjectClass::Ellipse,
                OrientedBox::new(10.5, 20.25, 8.0, 4.0, 0.75).unwrap(),
            ),
            Annotation::prediction(
                "img_00000",
                ObjectClass::Bag,
                OrientedBox::new(1.0, 2.0, 3.0, 4.0, 0.0).unwrap(),
                0.875,
            ),
        ];
        write_annotation_file(&path, &anns).unwrap();
        assert_eq!(read_annotation_file(&path).unwrap(), anns);
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        std::fs::write(
            &path,
            "image_id,class,cx,cy,w,h,angle_rad,confidence\nimg,ellipse,1,2,3,oops,0,\n",
        )
        .unwrap();
        match read_annotation_file(&path) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_class_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        std::fs::write(
            &path,
            "image_id,class,cx,cy,w,h,angle_rad,confidence\nimg,sphere,1,2,3,4,0,\n",
        )
        .unwrap();
        assert!(read_annotation_file(&path).is_err());
    }
}
