from fastapi import APIRouter, Request

router = APIRouter()


@router.get("/health", summary="Liveness check")
async def health(request: Request):
    registry = request.app.state.registry
    return {"status": "ok", "twins": len(registry.twins), "devices": len(registry.emulators)}


@router.get("/routes", summary="Model-DT-Device mapping")
async def routes(request: Request):
    mapping = request.app.state.registry.mapping
    return [entry.model_dump() for entry in mapping.entries]
