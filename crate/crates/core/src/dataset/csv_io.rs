use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Region, UpazilaRecord};
use crate::error::{Error, Result};

/// Exact header of the dataset CSV.
pub const CSV_COLUMNS: [&str; 15] = [
    "upazila_id",
    "district",
    "region",
    "poverty_rate",
    "pop_density",
    "agri_dependency",
    "housing_quality",
    "flood_depth",
    "flood_duration",
    "dist_to_rivers",
    "elevation",
    "roads_damaged",
    "tubewells_damaged",
    "health_facilities_affected",
    "damage_usd_m",
];

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

/// Parses a dataset from CSV text. Columns are matched by name; every schema
/// column must be present and no others may appear.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for h in headers.iter() {
        if !CSV_COLUMNS.contains(&h) {
            return Err(Error::UnexpectedColumn(h.to_owned()));
        }
    }
    let mut pos = [0usize; 15];
    for (slot, name) in pos.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))?;
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cell = |c: usize| row.get(pos[c]).unwrap_or("");
        let num = |c: usize| -> Result<f64> {
            let raw = cell(c);
            raw.parse::<f64>().map_err(|_| Error::Field {
                row: row_no,
                column: CSV_COLUMNS[c].to_owned(),
                message: format!("`{raw}` is not a number"),
            })
        };
        let count = |c: usize| -> Result<u32> {
            let raw = cell(c);
            raw.parse::<u32>().map_err(|_| Error::Field {
                row: row_no,
                column: CSV_COLUMNS[c].to_owned(),
                message: format!("`{raw}` is not a non-negative integer count"),
            })
        };
        let region = cell(2).parse::<Region>().map_err(|message| Error::Field {
            row: row_no,
            column: "region".into(),
            message,
        })?;
        let rec = UpazilaRecord {
            upazila_id: cell(0).to_owned(),
            district: cell(1).to_owned(),
            region,
            poverty_rate: num(3)?,
            pop_density: num(4)?,
            agri_dependency: num(5)?,
            housing_quality: num(6)?,
            flood_depth: num(7)?,
            flood_duration: num(8)?,
            dist_to_rivers: num(9)?,
            elevation: num(10)?,
            roads_damaged: num(11)?,
            tubewells_damaged: count(12)?,
            health_facilities_affected: count(13)?,
            damage_usd_m: num(14)?,
        };
        rec.validate(row_no)?;
        records.push(rec);
    }
    Dataset::new(records)
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(dataset.records(), file)
}

/// Writes records with the schema header. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv_to<W: Write>(records: &[UpazilaRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.upazila_id.clone(),
            r.district.clone(),
            r.region.to_string(),
            r.poverty_rate.to_string(),
            r.pop_density.to_string(),
            r.agri_dependency.to_string(),
            r.housing_quality.to_string(),
            r.flood_depth.to_string(),
            r.flood_duration.to_string(),
            r.dist_to_rivers.to_string(),
            r.elevation.to_string(),
            r.roads_damaged.to_string(),
            r.tubewells_damaged.to_string(),
            r.health_facilities_affected.to_string(),
            r.damage_usd_m.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "upazila_id,district,region,poverty_rate,pop_density,agri_dependency,housing_quality,flood_depth,flood_duration,dist_to_rivers,elevation,roads_damaged,tubewells_damaged,health_facilities_affected,damage_usd_m\n";

    fn row(id: &str, poverty: &str, region: &str) -> String {
        format!("{id},D1,{region},{poverty},1000,60,2.5,3.1,17,2.2,7.5,21.4,450,6,8.25\n")
    }

    #[test]
    fn reads_valid_rows() {
        let text = format!("{HEADER}{}{}", row("u1", "30.5", "haor"), row("u2", "20", "haor"));
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records()[0].poverty_rate, 30.5);
        assert_eq!(ds.records()[1].tubewells_damaged, 450);
    }

    #[test]
    fn poverty_out_of_range_names_row_and_column() {
        let text = format!("{HEADER}{}{}", row("u1", "30", "haor"), row("u2", "150", "haor"));
        let err = read_csv(text.as_bytes()).unwrap_err();
        match err {
            Error::Field { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "poverty_rate");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty_dataset() {
        assert!(matches!(read_csv(HEADER.as_bytes()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn missing_column_and_bad_cells() {
        let text = "upazila_id,district\nu1,D1\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::MissingColumn(_))));

        let text = format!("{HEADER}{}", row("u1", "abc", "haor"));
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Field { row: 1, ref column, .. } if column == "poverty_rate"));

        let text = format!("{HEADER}{}", row("u1", "30", "coastal"));
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Field { row: 1, ref column, .. } if column == "region"));
    }

    #[test]
    fn write_then_read_is_field_identical() {
        let text = format!("{HEADER}{}{}", row("u1", "30.5", "haor"), row("u2", "0.1", "haor"));
        let ds = read_csv(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_csv_to(ds.records(), &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.records(), ds.records());
    }
}
