"""Command line entry: victim-server --model stub --port 8765."""

import argparse
import sys

from .models import resolve_model
from .server import make_server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="victim-server",
        description="Serve a video classifier over the classify wire protocol.")
    parser.add_argument("--model", default="stub",
                        help='model id: "stub" or "module:factory" '
                             "(default: %(default)s)")
    parser.add_argument("--host", default="127.0.0.1",
                        help="bind address (default: %(default)s)")
    parser.add_argument("--port", type=int, default=8765,
                        help="port, 0 for ephemeral (default: %(default)s)")
    args = parser.parse_args(argv)
    try:
        model = resolve_model(args.model)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    server = make_server(model, args.host, args.port, quiet=False)
    print("serving %s (%d classes, input %r) on http://%s:%d"
          % (model.model_id, model.num_classes, model.input_shape,
             args.host, server.server_port))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
