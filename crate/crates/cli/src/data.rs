use std::fs::File;
use std::path::Path;

use sphericity::spectra::DataMatrix;

use crate::CliError;

/// Reads a numeric CSV. A first row containing any non-numeric field is
/// taken to be a header and skipped.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(_) => {
                let line = record.position().map_or(i as u64 + 1, |p| p.line());
                return Err(CliError::Parse(format!(
                    "{}: line {line}: non-numeric field in a data row",
                    path.display()
                )));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Parse(format!("{}: no data rows", path.display())));
    }
    let width = rows[0].len();
    if let Some(k) = rows.iter().position(|r| r.len() != width) {
        return Err(CliError::Parse(format!(
            "{}: data row {} has {} fields, expected {width}",
            path.display(),
            k + 1,
            rows[k].len()
        )));
    }
    Ok(rows)
}

fn transpose(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// Loads observations from a CSV with one observation per row, or one per
/// column when `transpose` is set.
pub fn load_data(path: &Path, transpose_input: bool) -> Result<DataMatrix, CliError> {
    let mut rows = read_matrix(path)?;
    if transpose_input {
        rows = transpose(rows);
    }
    Ok(DataMatrix::from_observations(&rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_is_detected() {
        let f = write("a,b,c\n1,2,3\n4,5,6\n");
        assert_eq!(read_matrix(f.path()).unwrap(), vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let f = write("1,2,3\n4,5,6\n");
        assert_eq!(read_matrix(f.path()).unwrap().len(), 2);
    }

    #[test]
    fn bad_rows_are_rejected() {
        assert!(matches!(read_matrix(write("1,2\n3,x\n").path()), Err(CliError::Parse(_))));
        assert!(matches!(read_matrix(write("x,y\n").path()), Err(CliError::Parse(_))));
        assert!(read_matrix(write("1,2\n3\n").path()).is_err());
    }

    #[test]
    fn transpose_flips_layout() {
        let f = write("1,2,3\n4,5,6\n");
        let d = load_data(f.path(), false).unwrap();
        assert_eq!((d.p(), d.n()), (3, 2));
        let d = load_data(f.path(), true).unwrap();
        assert_eq!((d.p(), d.n()), (2, 3));
        assert_eq!(d.entries()[(1, 0)], 4.0);
    }
}
