/** Strict CSV for the numeric experiment tables: a header row of column
 * names followed by numeric rows.  Parsing failures name the offending
 * column and line. */

export interface Table {
  columns: string[];
  rows: number[][];
}

export class SchemaError extends Error {}

export function parseCsv(text: string, path = "<csv>"): Table {
  const lines = text
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${path}: empty file`);
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== columns.length) {
      throw new SchemaError(
        `${path}:${i + 1}: row has ${cells.length} cells, header has ${columns.length}`,
      );
    }
    const row = cells.map((cell, j) => {
      if (cell.trim() === "true") return 1;
      if (cell.trim() === "false") return 0;
      const value = Number(cell);
      if (!Number.isFinite(value)) {
        throw new SchemaError(
          `${path}:${i + 1}: column '${columns[j]}' is not numeric: ${cell.trim()}`,
        );
      }
      return value;
    });
    rows.push(row);
  }
  return { columns, rows };
}

export function requireColumns(table: Table, names: string[], path = "<csv>"): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new SchemaError(`${path}: missing required column '${name}'`);
    }
  }
}

export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`missing required column '${name}'`);
  }
  return table.rows.map((r) => r[idx]);
}
