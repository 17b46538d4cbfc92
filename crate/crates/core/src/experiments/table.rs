use std::io::Write;

use crate::error::Result;

/// A rectangular table of already formatted cells.
///
/// Floating-point cells use the shortest representation that parses back
/// to the same value, so no precision is lost in the files.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Table {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    /// Append a row; panics if its width differs from the header's.
    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(&self.header)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("cells are valid UTF-8")
    }

    /// Whitespace-separated mirror readable by gnuplot; the header becomes
    /// a `#` comment line.
    pub fn write_dat<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {}", self.header.join(" "))?;
        for row in &self.rows {
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Column-aligned rendering for terminals.
    pub fn to_pretty(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
        };
        let mut s = line(&self.header);
        s.push('\n');
        for row in &self.rows {
            s.push_str(&line(row));
            s.push('\n');
        }
        s
    }
}

/// Format a number for a table cell.
pub fn cell(x: impl std::fmt::Display) -> String {
    x.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![cell(0.1), cell(f64::INFINITY)]);
        t.push(vec![cell(1.0 / 3.0), cell("x")]);
        t
    }

    #[test]
    fn csv_round_trips_floats() {
        let text = sample().to_csv_string();
        assert_eq!(text, "a,b\n0.1,inf\n0.3333333333333333,x\n");
        let v: f64 = text.lines().nth(2).unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }

    #[test]
    fn dat_mirror() {
        let mut buf = Vec::new();
        sample().write_dat(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# a b\n0.1 inf\n0.3333333333333333 x\n");
    }

    #[test]
    #[should_panic]
    fn ragged_rows_are_rejected() {
        Table::new(["a"]).push(vec![]);
    }

    #[test]
    fn pretty_aligns_columns() {
        let p = sample().to_pretty();
        assert!(p.lines().all(|l| l.len() == p.lines().next().unwrap().len()));
    }
}
