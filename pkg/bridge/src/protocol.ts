export interface Request {
  imageId: string;
  path: string;
}

export class ProtocolError extends Error {}

/** Parse one `image_id<TAB>absolute_path` request line. */
export function parseRequestLine(line: string): Request {
  const sep = line.indexOf("\t");
  if (sep <= 0 || sep === line.length - 1) {
    throw new ProtocolError(`malformed request line: ${JSON.stringify(line)}`);
  }
  return { imageId: line.slice(0, sep), path: line.slice(sep + 1) };
}

export function scoreLine(imageId: string, score: number): string {
  return `${imageId}\t${score.toFixed(6)}`;
}

export function errorLine(imageId: string, reason: string): string {
  const clean = reason.replace(/[\t\n\r]+/g, " ").trim() || "unknown error";
  return `${imageId}\tERROR\t${clean}`;
}
