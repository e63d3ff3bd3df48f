export class ExporterError extends Error {}

export class ImageDecodeError extends ExporterError {}

export class EncoderLoadError extends ExporterError {}

export class FormatError extends ExporterError {}
